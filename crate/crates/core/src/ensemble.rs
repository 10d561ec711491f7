//! Random ensembles: δ-left-regular bipartite graphs, distributed supports and
//! matrices, Bernoulli matrices, and the set operations on them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{dim, param, Error, Result};
use crate::matrix::DenseMatrix;
use crate::seed;

/// Entries with magnitude at or below this count as zero.
pub const NONZERO_TOL: f64 = 1e-12;

/// Smallest magnitude placed on a support cell by [`gen_distributed_matrix`].
pub const VALUE_FLOOR: f64 = 1e-3;

/// Default tensor-graph materialization cap (left vertices per factor).
pub const TENSOR_EDGE_CAP: usize = 64;

/// Default left degree: `max(2, ceil(ln p))`.
pub fn default_delta(p: usize) -> usize {
    ((p.max(1) as f64).ln().ceil() as usize).max(2)
}

/// A δ-left-regular bipartite graph `([p], [m], E)` sampled with replacement.
///
/// `targets[i]` holds the δ right vertices drawn for left vertex `i`, in draw
/// order and with repeats. Indices are 0-based internally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    p: usize,
    m: usize,
    delta: usize,
    targets: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    /// Build from explicit target lists; every list must have the same length.
    pub fn from_targets(p: usize, m: usize, targets: Vec<Vec<usize>>) -> Result<Self> {
        if p == 0 || m == 0 {
            return Err(param("p and m must be positive"));
        }
        if targets.len() != p {
            return Err(dim(format!("{} target lists for {p} left vertices", targets.len())));
        }
        let delta = targets[0].len();
        if delta == 0 {
            return Err(param("left degree must be positive"));
        }
        for (i, t) in targets.iter().enumerate() {
            if t.len() != delta {
                return Err(param(format!("left vertex {i} has degree {} != {delta}", t.len())));
            }
            if let Some(&j) = t.iter().find(|&&j| j >= m) {
                return Err(param(format!("right vertex {j} out of range for m={m}")));
            }
        }
        Ok(Self { p, m, delta, targets })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// Edge slots of left vertex `i`, with repeats.
    pub fn targets(&self, i: usize) -> &[usize] {
        &self.targets[i]
    }

    /// Distinct right neighbours of left vertex `i`, ascending.
    pub fn neighbor_set(&self, i: usize) -> Vec<usize> {
        let mut v = self.targets[i].clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// `N(s)` for a set of left vertices.
    pub fn neighbors(&self, s: &[usize]) -> Result<BTreeSet<usize>> {
        let mut out = BTreeSet::new();
        for &i in s {
            if i >= self.p {
                return Err(param(format!("left vertex {i} out of range for p={}", self.p)));
            }
            out.extend(self.targets[i].iter().copied());
        }
        Ok(out)
    }

    /// Whether left vertex `i` drew some right vertex more than once.
    pub fn has_repeat(&self, i: usize) -> bool {
        self.neighbor_set(i).len() < self.delta
    }

    /// Adjacency counts as an `m x p` matrix. With `clip_binary` multi-edges
    /// collapse to 1.
    pub fn adjacency(&self, clip_binary: bool) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.m, self.p);
        for (i, t) in self.targets.iter().enumerate() {
            for &j in t {
                a[(j, i)] += 1.0;
            }
        }
        if clip_binary {
            a = a.map(|v| v.min(1.0));
        }
        a
    }

    /// Text form: `p m delta` then one line of 1-based targets per left vertex.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.p, self.m, self.delta);
        for t in &self.targets {
            let line: Vec<String> = t.iter().map(|j| (j + 1).to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty input".into() })?;
        let nums = parse_usizes(header, hl + 1)?;
        let [p, m, delta] = nums[..] else {
            return Err(Error::Parse { line: hl + 1, msg: "header must be `p m delta`".into() });
        };
        let mut targets = Vec::with_capacity(p);
        for (ln, line) in lines {
            let t = parse_usizes(line, ln + 1)?;
            if t.len() != delta || t.iter().any(|&j| j == 0 || j > m) {
                return Err(Error::Parse { line: ln + 1, msg: format!("expected {delta} indices in 1..={m}") });
            }
            targets.push(t.into_iter().map(|j| j - 1).collect());
        }
        Self::from_targets(p, m, targets)
    }
}

fn parse_usizes(line: &str, lineno: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|f| f.parse::<usize>().map_err(|_| Error::Parse { line: lineno, msg: format!("not an index: {f:?}") }))
        .collect()
}

/// Draw a uniformly random δ-left-regular bipartite graph (with replacement).
pub fn gen_left_regular(p: usize, m: usize, delta: usize, seed: u64) -> Result<BipartiteGraph> {
    if p == 0 || m == 0 || delta == 0 {
        return Err(param("p, m and delta must all be >= 1"));
    }
    if delta > 10 * m {
        return Err(param(format!("delta={delta} exceeds 10*m={}", 10 * m)));
    }
    let mut rng = seed::rng(seed);
    let pick = Uniform::new(0, m);
    let targets = (0..p).map(|_| (0..delta).map(|_| pick.sample(&mut rng)).collect()).collect();
    Ok(BipartiteGraph { p, m, delta, targets })
}

/// The tensor graph `G1 ⊗ G2` on `[p]² -> [m]²`, queried on demand.
#[derive(Debug, Clone, Copy)]
pub struct TensorGraph<'a> {
    pub g1: &'a BipartiteGraph,
    pub g2: &'a BipartiteGraph,
}

impl<'a> TensorGraph<'a> {
    pub fn new(g1: &'a BipartiteGraph, g2: &'a BipartiteGraph) -> Result<Self> {
        if g1.p != g2.p || g1.m != g2.m {
            return Err(dim("tensor factors must share p and m"));
        }
        Ok(Self { g1, g2 })
    }

    pub fn shared(g: &'a BipartiteGraph) -> Self {
        Self { g1: g, g2: g }
    }

    pub fn p(&self) -> usize {
        self.g1.p
    }

    pub fn m(&self) -> usize {
        self.g1.m
    }

    /// Distinct right pairs adjacent to `(i, i')`.
    pub fn pair_neighbors(&self, i: usize, ip: usize) -> Vec<(usize, usize)> {
        let a = self.g1.neighbor_set(i);
        let b = self.g2.neighbor_set(ip);
        a.iter().flat_map(|&j| b.iter().map(move |&jp| (j, jp))).collect()
    }

    /// Edge multiplicity between `(i,i')` and `(j,j')`.
    pub fn multiplicity(&self, (i, ip): (usize, usize), (j, jp): (usize, usize)) -> usize {
        let c1 = self.g1.targets[i].iter().filter(|&&t| t == j).count();
        let c2 = self.g2.targets[ip].iter().filter(|&&t| t == jp).count();
        c1 * c2
    }

    /// `N(Ω)` as a set of right pairs.
    pub fn neighbors(&self, omega: &Support) -> Result<BTreeSet<(usize, usize)>> {
        if omega.p() != self.p() {
            return Err(dim(format!("support is {}x{}, graph has p={}", omega.p(), omega.p(), self.p())));
        }
        let mut out = BTreeSet::new();
        for &(i, ip) in omega.cells() {
            out.extend(self.pair_neighbors(i, ip));
        }
        Ok(out)
    }

    /// Explicit `((i,i'), (j,j'), multiplicity)` list; refused beyond `cap`.
    pub fn edge_list(&self, cap: usize) -> Result<Vec<((usize, usize), (usize, usize), usize)>> {
        if self.p() > cap {
            return Err(Error::SizeGuard(format!("p={} exceeds tensor edge cap {cap}", self.p())));
        }
        let mut edges = Vec::new();
        for i in 0..self.p() {
            for ip in 0..self.p() {
                for (j, jp) in self.pair_neighbors(i, ip) {
                    edges.push(((i, ip), (j, jp), self.multiplicity((i, ip), (j, jp))));
                }
            }
        }
        Ok(edges)
    }
}

/// `N(Ω)` for the tensor graph.
pub fn tensor_neighbors(tg: &TensorGraph<'_>, omega: &Support) -> Result<BTreeSet<(usize, usize)>> {
    tg.neighbors(omega)
}

/// A set of cells `Ω ⊆ [p]×[p]` with row/column cardinalities kept in sync.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    p: usize,
    cells: BTreeSet<(usize, usize)>,
    row_counts: Vec<usize>,
    col_counts: Vec<usize>,
}

impl Support {
    pub fn empty(p: usize) -> Self {
        Self { p, cells: BTreeSet::new(), row_counts: vec![0; p], col_counts: vec![0; p] }
    }

    pub fn diagonal(p: usize) -> Self {
        let mut s = Self::empty(p);
        for i in 0..p {
            s.insert(i, i);
        }
        s
    }

    pub fn full(p: usize) -> Self {
        let mut s = Self::empty(p);
        for i in 0..p {
            for j in 0..p {
                s.insert(i, j);
            }
        }
        s
    }

    pub fn from_cells(p: usize, cells: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut s = Self::empty(p);
        for (i, j) in cells {
            if i >= p || j >= p {
                return Err(param(format!("cell ({i},{j}) out of range for p={p}")));
            }
            s.insert(i, j);
        }
        Ok(s)
    }

    /// Cells of `x` whose magnitude exceeds `tol`.
    pub fn of_matrix(x: &DenseMatrix, tol: f64) -> Self {
        assert!(x.is_square(), "support of a non-square matrix");
        let mut s = Self::empty(x.rows());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                if x[(i, j)].abs() > tol {
                    s.insert(i, j);
                }
            }
        }
        s
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &BTreeSet<(usize, usize)> {
        &self.cells
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.cells.contains(&(i, j))
    }

    pub fn row_counts(&self) -> &[usize] {
        &self.row_counts
    }

    pub fn col_counts(&self) -> &[usize] {
        &self.col_counts
    }

    /// Returns false if the cell was already present.
    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        let fresh = self.cells.insert((i, j));
        if fresh {
            self.row_counts[i] += 1;
            self.col_counts[j] += 1;
        }
        fresh
    }

    pub fn remove(&mut self, i: usize, j: usize) -> bool {
        let had = self.cells.remove(&(i, j));
        if had {
            self.row_counts[i] -= 1;
            self.col_counts[j] -= 1;
        }
        had
    }

    /// Membership in the class of d-distributed sets: diagonal present and
    /// at most `d` cells in every row and column.
    pub fn is_distributed(&self, d: usize) -> bool {
        (0..self.p).all(|i| self.contains(i, i))
            && self.row_counts.iter().all(|&c| c <= d)
            && self.col_counts.iter().all(|&c| c <= d)
    }

    pub fn max_degree(&self) -> usize {
        self.row_counts.iter().chain(&self.col_counts).copied().max().unwrap_or(0)
    }

    /// Indicator matrix of the support.
    pub fn mask(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.p, self.p);
        for &(i, j) in &self.cells {
            m[(i, j)] = 1.0;
        }
        m
    }

    pub fn jaccard(&self, other: &Support) -> f64 {
        let inter = self.cells.intersection(&other.cells).count();
        let union = self.cells.union(&other.cells).count();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// `row col` pairs, 1-based, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for &(i, j) in &self.cells {
            let _ = writeln!(s, "{} {}", i + 1, j + 1);
        }
        s
    }

    /// Parse `row col` pairs. When `p` is `None` it is the largest index seen.
    pub fn from_text(text: &str, p: Option<usize>) -> Result<Self> {
        let mut cells = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v = parse_usizes(line, ln + 1)?;
            let [i, j] = v[..] else {
                return Err(Error::Parse { line: ln + 1, msg: "expected `row col`".into() });
            };
            if i == 0 || j == 0 {
                return Err(Error::Parse { line: ln + 1, msg: "indices are 1-based".into() });
            }
            cells.push((i - 1, j - 1));
        }
        let p = p.unwrap_or_else(|| cells.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
        Self::from_cells(p, cells)
    }
}

/// Random d-distributed support: the full diagonal plus off-diagonal cells
/// drawn by rejection until every row and column holds `d` cells, or the
/// retry budget of `100·p·d` draws runs out.
pub fn gen_distributed_support(p: usize, d: usize, seed: u64) -> Result<Support> {
    check_support_params(p, d)?;
    let mut rng = seed::rng(seed);
    let mut s = Support::diagonal(p);
    let target = p * d;
    let budget = 100 * p * d;
    let mut attempts = 0;
    while s.len() < target && attempts < budget {
        attempts += 1;
        let i = rng.gen_range(0..p);
        let j = rng.gen_range(0..p);
        if i == j || s.contains(i, j) || s.row_counts[i] >= d || s.col_counts[j] >= d {
            continue;
        }
        s.insert(i, j);
    }
    Ok(s)
}

/// Symmetric variant: off-diagonal cells are added in mirrored pairs. Used
/// for covariance supports and bounded-degree graphs (degree `d - 1`).
pub fn gen_symmetric_distributed_support(p: usize, d: usize, seed: u64) -> Result<Support> {
    check_support_params(p, d)?;
    let mut rng = seed::rng(seed);
    let mut s = Support::diagonal(p);
    let target = p * d;
    let budget = 100 * p * d;
    let mut attempts = 0;
    while s.len() < target && attempts < budget {
        attempts += 1;
        let i = rng.gen_range(0..p);
        let j = rng.gen_range(0..p);
        if i == j || s.contains(i, j) || s.row_counts[i] >= d || s.row_counts[j] >= d {
            continue;
        }
        s.insert(i, j);
        s.insert(j, i);
    }
    Ok(s)
}

fn check_support_params(p: usize, d: usize) -> Result<()> {
    if p == 0 || d == 0 || d > p {
        return Err(param(format!("need 1 <= d <= p, got p={p}, d={d}")));
    }
    Ok(())
}

/// Distribution of values placed on support cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ValueSpec {
    Unit,
    Uniform { a: f64, b: f64 },
    Gaussian { mu: f64, sigma: f64 },
}

impl Default for ValueSpec {
    fn default() -> Self {
        ValueSpec::Gaussian { mu: 0.0, sigma: 1.0 }
    }
}

impl ValueSpec {
    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            ValueSpec::Unit => Ok(()),
            ValueSpec::Uniform { a, b } if a < b && a.is_finite() && b.is_finite() => Ok(()),
            ValueSpec::Gaussian { mu, sigma } if sigma > 0.0 && mu.is_finite() && sigma.is_finite() => Ok(()),
            _ => Err(param(format!("invalid value distribution {self:?}"))),
        }
    }

    /// Draw one value, pushed away from zero to at least `VALUE_FLOOR`.
    pub fn sample(&self, rng: &mut seed::Rng) -> f64 {
        let v = match *self {
            ValueSpec::Unit => 1.0,
            ValueSpec::Uniform { a, b } => rng.gen_range(a..b),
            ValueSpec::Gaussian { mu, sigma } => Normal::new(mu, sigma).expect("validated").sample(rng),
        };
        if v.abs() < VALUE_FLOOR {
            VALUE_FLOOR.copysign(if v == 0.0 { 1.0 } else { v })
        } else {
            v
        }
    }
}

impl FromStr for ValueSpec {
    type Err = Error;

    /// `unit`, `uniform:a,b` or `gaussian:mu,sigma`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = args
            .split(',')
            .filter(|a| !a.trim().is_empty())
            .map(|a| a.trim().parse::<f64>().map_err(|_| param(format!("bad number {a:?}"))))
            .collect::<Result<_>>()?;
        let spec = match (kind.trim(), nums.as_slice()) {
            ("unit", []) => ValueSpec::Unit,
            ("uniform", [a, b]) => ValueSpec::Uniform { a: *a, b: *b },
            ("gaussian", []) => ValueSpec::default(),
            ("gaussian", [mu, sigma]) => ValueSpec::Gaussian { mu: *mu, sigma: *sigma },
            _ => return Err(param(format!("unknown value spec {s:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Matrix that is nonzero exactly on `support`.
pub fn gen_distributed_matrix(support: &Support, spec: ValueSpec, seed: u64) -> Result<DenseMatrix> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let mut x = DenseMatrix::zeros(support.p(), support.p());
    for &(i, j) in support.cells() {
        x[(i, j)] = spec.sample(&mut rng);
    }
    Ok(x)
}

/// i.i.d. Bernoulli(γ) 0/1 matrix.
pub fn gen_bernoulli_matrix(p: usize, gamma: f64, seed: u64) -> Result<DenseMatrix> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(param(format!("gamma={gamma} is not a probability")));
    }
    let mut rng = seed::rng(seed);
    Ok(DenseMatrix::from_fn(p, p, |_, _| if rng.gen_bool(gamma) { 1.0 } else { 0.0 }))
}

/// Row/column sparsity level that a Bernoulli(Δ/p) matrix stays under with
/// probability at least `1 - eps`: `Δ + 2 ln(2p/eps)`.
pub fn prop1_degree_bound(big_delta: f64, p: usize, eps: f64) -> Result<f64> {
    if big_delta <= 0.0 || !(eps > 0.0 && eps < 1.0) || p == 0 {
        return Err(param("need Δ > 0, p >= 1 and 0 < eps < 1"));
    }
    Ok(big_delta + 2.0 * (2.0 * p as f64 / eps).ln())
}

/// Maximum nonzero count over all rows and columns.
pub fn degree_of_sparsity(x: &DenseMatrix) -> usize {
    degree_of_sparsity_tol(x, NONZERO_TOL)
}

pub fn degree_of_sparsity_tol(x: &DenseMatrix, tol: f64) -> usize {
    let mut cols = vec![0usize; x.cols()];
    let mut best = 0;
    for i in 0..x.rows() {
        let mut r = 0;
        for (j, v) in x.row(i).iter().enumerate() {
            if v.abs() > tol {
                r += 1;
                cols[j] += 1;
            }
        }
        best = best.max(r);
    }
    best.max(cols.into_iter().max().unwrap_or(0))
}

/// `X_Ω`: entries on Ω kept, everything else zeroed.
pub fn project_support(x: &DenseMatrix, omega: &Support) -> Result<DenseMatrix> {
    if x.shape() != (omega.p(), omega.p()) {
        return Err(dim(format!("matrix is {:?}, support is {}x{}", x.shape(), omega.p(), omega.p())));
    }
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for &(i, j) in omega.cells() {
        out[(i, j)] = x[(i, j)];
    }
    Ok(out)
}

/// The arrow matrix: dense first row and column plus the diagonal.
pub fn arrow_matrix(p: usize, spec: ValueSpec, seed: u64) -> Result<DenseMatrix> {
    let mut cells = Support::diagonal(p);
    for k in 0..p {
        cells.insert(0, k);
        cells.insert(k, 0);
    }
    gen_distributed_matrix(&cells, spec, seed)
}
