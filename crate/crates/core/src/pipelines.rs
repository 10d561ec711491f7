//! End-to-end flows built on the sketch operator: covariance and
//! cross-covariance sketching from samples, graph sketching by vertex
//! partitions, and recovery of rectangular matrices by padding.

use std::path::Path;

use nalgebra::SymmetricEigen;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{gen_left_regular, gen_symmetric_distributed_support, BipartiteGraph, Support, ValueSpec};
use crate::error::{dim, param, Error, Result};
use crate::exec::Exec;
use crate::matrix::DenseMatrix;
use crate::operator::SketchOperator;
use crate::seed;
use crate::solver::{cv_select_kappa, solve_constrained, solve_p1, FoldSketch, RecoveryResult, SolverOptions};

/// Largest asymmetry tolerated in a covariance sketch before rejecting it.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Magnitude below which recovered entries are treated as zero for support
/// comparisons.
pub const SUPPORT_THRESHOLD: f64 = 1e-2;
/// Largest magnitude allowed on padding rows in [`rectangular_recover`].
pub const PADDING_TOL: f64 = 1e-6;

/// Seeded i.i.d. Gaussian vectors with covariance `Σ`, drawn as `Σ^{1/2} g`.
#[derive(Debug, Clone)]
pub struct SampleStream {
    sigma: DenseMatrix,
    root: DenseMatrix,
    n: usize,
    seed: u64,
}

impl SampleStream {
    /// `sigma` must be symmetric positive semidefinite; tiny negative
    /// eigenvalues from rounding are clamped to zero.
    pub fn new(sigma: DenseMatrix, n: usize, seed: u64) -> Result<Self> {
        if !sigma.is_square() {
            return Err(dim("covariance must be square"));
        }
        if n == 0 {
            return Err(param("need at least one sample"));
        }
        let scale = sigma.linf().max(1.0);
        if sigma.asymmetry() > SYMMETRY_TOL * scale {
            return Err(param("covariance is not symmetric"));
        }
        let eig = SymmetricEigen::new(sigma.symmetrized().to_nalgebra());
        if eig.eigenvalues.iter().any(|&l| l < -1e-9 * scale) {
            return Err(param("covariance is not positive semidefinite"));
        }
        let mut q = eig.eigenvectors.clone();
        for (mut col, &l) in q.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= l.max(0.0).sqrt();
        }
        let root = DenseMatrix::from_nalgebra(&(q * eig.eigenvectors.transpose()));
        Ok(Self { sigma, root, n, seed })
    }

    /// Planted `d`-distributed covariance on a symmetric support: off-diagonal
    /// values from `spec`, each diagonal entry set to `d · (largest
    /// off-diagonal magnitude in its row) + 1`, which makes `Σ` strictly
    /// diagonally dominant and hence positive definite.
    pub fn planted(p: usize, d: usize, spec: ValueSpec, n: usize, seed: u64) -> Result<(Self, Support)> {
        spec.validate()?;
        let support = gen_symmetric_distributed_support(p, d, seed::substream(seed, 10))?;
        let mut rng = seed::rng(seed::substream(seed, 11));
        let mut sigma = DenseMatrix::zeros(p, p);
        for &(i, j) in support.cells() {
            if i < j {
                let v = spec.sample(&mut rng);
                sigma[(i, j)] = v;
                sigma[(j, i)] = v;
            }
        }
        for i in 0..p {
            let off = sigma.row(i).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            sigma[(i, i)] = d as f64 * off + 1.0;
        }
        Ok((Self::new(sigma, n, seed::substream(seed, 12))?, support))
    }

    pub fn p(&self) -> usize {
        self.sigma.rows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> &DenseMatrix {
        &self.sigma
    }

    /// The symmetric square root used to colour the samples.
    pub fn root(&self) -> &DenseMatrix {
        &self.root
    }

    /// The `n` samples in order; restarting the iterator replays them.
    pub fn iter(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let mut rng = seed::rng(self.seed);
        let p = self.p();
        (0..self.n).map(move |_| {
            let g: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            (0..p).map(|i| self.root.row(i).iter().zip(&g).map(|(r, x)| r * x).sum()).collect()
        })
    }
}

/// `(1/n) Σ ξ ξᵀ` over the stream.
pub fn empirical_covariance(stream: &SampleStream) -> DenseMatrix {
    let p = stream.p();
    let mut acc = DenseMatrix::zeros(p, p);
    for xi in stream.iter() {
        outer_accumulate(&mut acc, &xi, &xi);
    }
    acc.scaled(1.0 / stream.n() as f64)
}

fn outer_accumulate(acc: &mut DenseMatrix, u: &[f64], v: &[f64]) {
    for (i, &ui) in u.iter().enumerate() {
        if ui != 0.0 {
            for (a, &vj) in acc.row_mut(i).iter_mut().zip(v) {
                *a += ui * vj;
            }
        }
    }
}

fn sketch_vector(a: &DenseMatrix, xi: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|j| a.row(j).iter().zip(xi).map(|(x, y)| x * y).sum()).collect()
}

/// One pass over the stream accumulating `(1/n) Σ z zᵀ` with `z = A ξ`.
pub fn cov_sketch(stream: &SampleStream, a: &DenseMatrix) -> Result<DenseMatrix> {
    let mut folds = cov_sketch_folds(stream, a, 1)?;
    Ok(folds.pop().expect("one fold").sketch)
}

/// As [`cov_sketch`], but splitting the stream into `k` contiguous folds of
/// near-equal size, each with its own sketch-domain covariance.
pub fn cov_sketch_folds(stream: &SampleStream, a: &DenseMatrix, k: usize) -> Result<Vec<FoldSketch>> {
    if a.cols() != stream.p() {
        return Err(dim(format!("sketch matrix has {} columns, samples have {}", a.cols(), stream.p())));
    }
    if k == 0 || k > stream.n() {
        return Err(param(format!("cannot split {} samples into {k} folds", stream.n())));
    }
    let m = a.rows();
    let n = stream.n();
    let mut folds: Vec<FoldSketch> = Vec::with_capacity(k);
    let mut acc = DenseMatrix::zeros(m, m);
    let mut count = 0;
    for (t, xi) in stream.iter().enumerate() {
        let z = sketch_vector(a, &xi);
        outer_accumulate(&mut acc, &z, &z);
        count += 1;
        let end = (folds.len() + 1) * n / k;
        if t + 1 == end {
            folds.push(FoldSketch { sketch: acc.scaled(1.0 / count as f64), count });
            acc = DenseMatrix::zeros(m, m);
            count = 0;
        }
    }
    Ok(folds)
}

/// Sample-weighted mean of fold sketches.
pub fn pool_folds(folds: &[FoldSketch]) -> Result<DenseMatrix> {
    let first = folds.first().ok_or_else(|| param("no folds"))?;
    let total: usize = folds.iter().map(|f| f.count).sum();
    let mut acc = DenseMatrix::zeros(first.sketch.rows(), first.sketch.cols());
    for f in folds {
        acc.axpy(f.count as f64 / total as f64, &f.sketch);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RecoveryMode {
    Exact,
    Constrained { kappa: f64 },
}

/// Recover `Σ` from `Σ_Z = A Σ Aᵀ` using the shared-matrix operator. A
/// sketch that is asymmetric beyond rounding is rejected; otherwise it is
/// symmetrised first.
pub fn recover_covariance(
    a: &DenseMatrix,
    sigma_z: &DenseMatrix,
    mode: RecoveryMode,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    if sigma_z.shape() != (a.rows(), a.rows()) {
        return Err(dim("covariance sketch must be m x m"));
    }
    if sigma_z.asymmetry() > SYMMETRY_TOL * sigma_z.linf().max(1.0) {
        return Err(param(format!("covariance sketch asymmetric by {:.3e}", sigma_z.asymmetry())));
    }
    let op = SketchOperator::shared_matrix(a);
    let y = sigma_z.symmetrized();
    match mode {
        RecoveryMode::Exact => solve_p1(&op, &y, opts),
        RecoveryMode::Constrained { kappa } => solve_constrained(&op, &y, kappa, opts),
    }
}

/// Recover `Σ_ξζ` from `Σ_ZW = A Σ_ξζ Bᵀ` with independent sketch matrices.
pub fn cross_cov_recover(
    a: &DenseMatrix,
    b: &DenseMatrix,
    sigma_zw: &DenseMatrix,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    if sigma_zw.shape() != (a.rows(), b.rows()) {
        return Err(dim(format!(
            "cross-covariance sketch is {:?}, expected {}x{}",
            sigma_zw.shape(),
            a.rows(),
            b.rows()
        )));
    }
    solve_p1(&SketchOperator::from_matrices(a, b), sigma_zw, opts)
}

/// Covariance pipeline parameters, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovConfig {
    pub p: usize,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub delta: usize,
    pub seed: u64,
    /// `exact` on the ideal sketch `A Σ Aᵀ`, or `constrained` on the
    /// empirical sketch.
    pub mode: CovMode,
    /// Fixed κ for constrained mode; cross-validated when absent.
    pub kappa: Option<f64>,
    /// Inclusive exponent range `e` of the κ grid `2^e · ‖Ŷ_train‖₂`.
    pub kappa_exponents: (i32, i32),
    pub folds: usize,
    pub clip_binary: bool,
    pub values: ValueSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    Exact,
    Constrained,
}

impl Default for CovConfig {
    fn default() -> Self {
        Self {
            p: 40,
            d: 4,
            n: 2100,
            m: 21,
            delta: 4,
            seed: 0,
            mode: CovMode::Constrained,
            kappa: None,
            kappa_exponents: (-8, 4),
            folds: 5,
            clip_binary: false,
            values: ValueSpec::default(),
        }
    }
}

impl CovConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.m == 0 || self.delta == 0 || self.n == 0 || self.d == 0 || self.d > self.p {
            return Err(param("p, m, delta, n must be positive and 1 <= d <= p"));
        }
        if self.kappa_exponents.0 > self.kappa_exponents.1 {
            return Err(param("empty kappa exponent range"));
        }
        if self.mode == CovMode::Constrained && self.kappa.is_none() && (self.folds < 2 || self.folds > self.n) {
            return Err(param("cross-validation needs 2 <= folds <= n"));
        }
        if let Some(k) = self.kappa {
            if !(k >= 0.0) {
                return Err(param("kappa must be non-negative"));
            }
        }
        self.values.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CovReport {
    /// `‖X* − Σ‖₁ / ‖Σ‖₁`; the zero estimate scores exactly 1.
    pub rel_l1_error: f64,
    /// Jaccard overlap of `{|X*| > 10⁻²}` with the planted support.
    pub jaccard: f64,
    pub kappa: Option<f64>,
    pub result: RecoveryResult,
    #[serde(skip)]
    pub sigma: DenseMatrix,
}

/// Plant `Σ`, sketch the samples (or `Σ` itself in exact mode), recover and
/// score. In constrained mode without a fixed κ, κ is chosen by k-fold
/// cross-validation on fold sketches and rescaled to the pooled sample size.
pub fn run_covariance(cfg: &CovConfig, opts: &SolverOptions, exec: Exec) -> Result<CovReport> {
    cfg.validate()?;
    let (stream, support) = SampleStream::planted(cfg.p, cfg.d, cfg.values, cfg.n, cfg.seed)?;
    let g = gen_left_regular(cfg.p, cfg.m, cfg.delta, seed::substream(cfg.seed, 13))?;
    let a = g.adjacency(cfg.clip_binary);
    let (result, kappa) = match cfg.mode {
        CovMode::Exact => {
            let ideal = a.matmul(stream.sigma())?.matmul(&a.transpose())?;
            (recover_covariance(&a, &ideal, RecoveryMode::Exact, opts)?, None)
        }
        CovMode::Constrained => {
            let k = if cfg.kappa.is_some() { 1 } else { cfg.folds };
            let folds = cov_sketch_folds(&stream, &a, k)?;
            let pooled = pool_folds(&folds)?;
            let kappa = match cfg.kappa {
                Some(k) => k,
                None => {
                    let op = SketchOperator::shared_matrix(&a);
                    let (lo, hi) = cfg.kappa_exponents;
                    let cv = cv_select_kappa(&op, &folds, lo..=hi, opts, exec)?;
                    let n_train = cfg.n - cfg.n / cfg.folds;
                    cv.kappa_for(&pooled, n_train, cfg.n)
                }
            };
            (recover_covariance(&a, &pooled, RecoveryMode::Constrained { kappa }, opts)?, Some(kappa))
        }
    };
    let sigma = stream.sigma().clone();
    let rel_l1_error = result.x.sub(&sigma).l1() / sigma.l1();
    let jaccard = Support::of_matrix(&result.x, SUPPORT_THRESHOLD).jaccard(&support);
    Ok(CovReport { rel_l1_error, jaccard, kappa, result, sigma })
}

/// An undirected graph on `[p]` (self-loops allowed) together with `m`
/// possibly overlapping vertex parts `V_1 … V_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedGraph {
    adjacency: DenseMatrix,
    parts: Vec<Vec<usize>>,
}

impl PartitionedGraph {
    /// `adjacency` must be a symmetric 0/1 matrix; every vertex must lie in
    /// at least one part.
    pub fn new(adjacency: DenseMatrix, parts: Vec<Vec<usize>>) -> Result<Self> {
        let p = adjacency.rows();
        if !adjacency.is_square() {
            return Err(dim("adjacency must be square"));
        }
        if adjacency.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) || adjacency.asymmetry() != 0.0 {
            return Err(param("adjacency must be a symmetric 0/1 matrix"));
        }
        let mut covered = vec![false; p];
        let mut parts = parts;
        for part in parts.iter_mut() {
            part.sort_unstable();
            part.dedup();
            for &v in part.iter() {
                if v >= p {
                    return Err(param(format!("vertex {} out of range 1..={p}", v + 1)));
                }
                covered[v] = true;
            }
        }
        if let Some(v) = covered.iter().position(|c| !c) {
            return Err(param(format!("vertex {} belongs to no part", v + 1)));
        }
        Ok(Self { adjacency, parts })
    }

    /// Parts from a bipartite ensemble graph: vertex `i` joins part `j` for
    /// every target `j` of `i`.
    pub fn with_ensemble_parts(adjacency: DenseMatrix, g: &BipartiteGraph) -> Result<Self> {
        if g.p() != adjacency.rows() {
            return Err(dim("graph and partition ensemble disagree on p"));
        }
        let mut parts = vec![Vec::new(); g.m()];
        for i in 0..g.p() {
            for j in g.neighbor_set(i) {
                parts[j].push(i);
            }
        }
        Self::new(adjacency, parts)
    }

    /// Edge list (`u v` per line, 1-based) and partition file (`vertex part`
    /// per line, 1-based). Blank lines and `#` comments are skipped. The
    /// vertex count is the largest index seen in either file unless given.
    pub fn from_text(edges: &str, partition: &str, p: Option<usize>) -> Result<Self> {
        let edge_pairs = parse_pairs(edges)?;
        let part_pairs = parse_pairs(partition)?;
        let seen =
            edge_pairs.iter().map(|&(u, v)| u.max(v)).chain(part_pairs.iter().map(|&(v, _)| v)).max().unwrap_or(0);
        let p = p.unwrap_or(seen);
        if seen > p {
            return Err(param(format!("vertex {seen} exceeds p={p}")));
        }
        let mut adjacency = DenseMatrix::zeros(p, p);
        for &(u, v) in &edge_pairs {
            adjacency[(u - 1, v - 1)] = 1.0;
            adjacency[(v - 1, u - 1)] = 1.0;
        }
        let m = part_pairs.iter().map(|&(_, k)| k).max().unwrap_or(0);
        let mut parts = vec![Vec::new(); m];
        for &(v, k) in &part_pairs {
            parts[k - 1].push(v - 1);
        }
        Self::new(adjacency, parts)
    }

    pub fn p(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn m(&self) -> usize {
        self.parts.len()
    }

    pub fn adjacency(&self) -> &DenseMatrix {
        &self.adjacency
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    /// `m x p` matrix with `A_ij = 1` iff vertex `j` lies in part `i`.
    pub fn indicator(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.m(), self.p());
        for (i, part) in self.parts.iter().enumerate() {
            for &v in part {
                a[(i, v)] = 1.0;
            }
        }
        a
    }

    /// Edge list text, `u v` with `u <= v`, 1-based.
    pub fn edges_to_text(&self) -> String {
        edges_to_text(&self.adjacency)
    }

    /// Partition text, `vertex part` pairs, 1-based.
    pub fn partition_to_text(&self) -> String {
        let mut out = String::new();
        for (k, part) in self.parts.iter().enumerate() {
            for &v in part {
                out.push_str(&format!("{} {}\n", v + 1, k + 1));
            }
        }
        out
    }
}

/// Upper-triangular edge list of a symmetric adjacency matrix, 1-based.
pub fn edges_to_text(adjacency: &DenseMatrix) -> String {
    let mut out = String::new();
    for u in 0..adjacency.rows() {
        for v in u..adjacency.cols() {
            if adjacency[(u, v)] != 0.0 {
                out.push_str(&format!("{} {}\n", u + 1, v + 1));
            }
        }
    }
    out
}

fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(Error::Parse { line: ln + 1, msg: format!("expected a 1-based index, got {s:?}") }),
            }
        };
        if nums.len() != 2 {
            return Err(Error::Parse { line: ln + 1, msg: format!("expected two indices, got {}", nums.len()) });
        }
        out.push((parse(nums[0])?, parse(nums[1])?));
    }
    Ok(out)
}

/// Random graph whose adjacency has every self-loop and at most
/// `max_degree` further neighbours per vertex.
pub fn random_bounded_degree_graph(p: usize, max_degree: usize, seed: u64) -> Result<DenseMatrix> {
    Ok(gen_symmetric_distributed_support(p, max_degree + 1, seed)?.mask())
}

/// `Y = A X Aᵀ`: `Y_ij` counts the edges between parts `V_i` and `V_j`,
/// with self-loops of shared vertices included.
pub fn graph_sketch(pg: &PartitionedGraph) -> Result<DenseMatrix> {
    SketchOperator::shared_matrix(&pg.indicator()).forward(pg.adjacency())
}

#[derive(Debug, Clone)]
pub struct Unsketched {
    pub result: RecoveryResult,
    /// `X*` rounded entrywise at 0.5.
    pub rounded: DenseMatrix,
}

/// Basis pursuit on the sketch followed by rounding to a 0/1 adjacency.
pub fn graph_unsketch(y: &DenseMatrix, a: &DenseMatrix, opts: &SolverOptions) -> Result<Unsketched> {
    let result = solve_p1(&SketchOperator::shared_matrix(a), y, opts)?;
    let rounded = result.x.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    Ok(Unsketched { result, rounded })
}

#[derive(Debug, Clone)]
pub struct RectRecovery {
    /// The `p1 x p2` estimate.
    pub x: DenseMatrix,
    /// Result of the padded square problem.
    pub result: RecoveryResult,
    /// Largest magnitude on the padding rows.
    pub padding_max: f64,
}

/// Recover a `p1 x p2` matrix from `Y = A X Bᵀ` by widening the narrower
/// sketch matrix with fresh ensemble columns so the problem is square, then
/// discarding the padding rows (or columns). The padding part of the
/// solution must vanish to [`PADDING_TOL`], else `converged` is cleared.
pub fn rectangular_recover(
    a: &DenseMatrix,
    b: &DenseMatrix,
    y: &DenseMatrix,
    seed: u64,
    opts: &SolverOptions,
) -> Result<RectRecovery> {
    if y.shape() != (a.rows(), b.rows()) {
        return Err(dim(format!("sketch is {:?}, expected {}x{}", y.shape(), a.rows(), b.rows())));
    }
    let (p1, p2) = (a.cols(), b.cols());
    if p1 > p2 {
        let t = rectangular_recover(b, a, &y.transpose(), seed, opts)?;
        return Ok(RectRecovery { x: t.x.transpose(), result: t.result, padding_max: t.padding_max });
    }
    if p1 == p2 {
        let result = solve_p1(&SketchOperator::from_matrices(a, b), y, opts)?;
        return Ok(RectRecovery { x: result.x.clone(), result, padding_max: 0.0 });
    }
    let m = a.rows();
    let delta = (0..m).map(|j| a[(j, 0)]).sum::<f64>().round().max(1.0) as usize;
    let extra = gen_left_regular(p2 - p1, m, delta, seed)?.adjacency(false);
    let padded = DenseMatrix::from_fn(m, p2, |j, i| if i < p1 { a[(j, i)] } else { extra[(j, i - p1)] });
    let mut result = solve_p1(&SketchOperator::from_matrices(&padded, b), y, opts)?;
    let padding_max = (p1..p2).flat_map(|i| result.x.row(i).iter().copied()).fold(0.0f64, |acc, v| acc.max(v.abs()));
    if padding_max > PADDING_TOL {
        result.converged = false;
    }
    let x = result.x.block(p1, p2);
    Ok(RectRecovery { x, result, padding_max })
}
