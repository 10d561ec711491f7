//! Empirical checkers for the structural facts behind l1 recovery: weak
//! distributed expansion of the tensor graph, the l1 near-isometry on
//! distributed-sparse matrices, the nullspace property, and the arrow-matrix
//! ambiguity.

use nalgebra::SymmetricEigen;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::ensemble::{arrow_matrix, project_support, Support, TensorGraph, ValueSpec};
use crate::error::{dim, param, Error, Result};
use crate::matrix::DenseMatrix;
use crate::operator::{unvec, RangeProjector, SketchOperator};
use crate::seed;

/// Default ε: the supremum of the admissible interval `(0, 1/4)`.
pub const DEFAULT_EPS: f64 = 0.25;

/// Largest `p` for which [`check_expansion`] runs without an override.
pub const EXPANSION_GUARD: usize = 300;

/// Slack on the deterministic upper l1 bound.
pub const RIP_UPPER_SLACK: f64 = 1e-12;

/// Kernel projections must leave a residual below this (relative).
pub const KERNEL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    /// `|N(Ω)|`.
    pub neighborhood_size: usize,
    /// `p δ² (1 − ε)`.
    pub bound: f64,
    /// `max_{(i,i') ∉ Ω} |N(i,i') ∩ N(Ω)|`.
    pub max_collision_outside: usize,
    /// `max_{(i,i') ∈ Ω} |N(i,i') ∩ N(Ω ∖ (i,i'))|`.
    pub max_collision_inside: usize,
    /// `ε δ²`, the collision budget for parts 2 and 3.
    pub collision_budget: f64,
    pub passed: [bool; 3],
}

impl ExpansionReport {
    pub fn all_passed(&self) -> bool {
        self.passed.iter().all(|&b| b)
    }
}

/// Exact neighbourhood and collision counts of `Ω` in `G1 ⊗ G2`.
///
/// Each right pair keeps a count of how many cells of `Ω` reach it, so
/// `(j,j') ∈ N(Ω ∖ ω)` for `ω ∈ Ω` adjacent to it iff the count is at least 2.
/// Both collision loops are over all of `[p]²`; beyond [`EXPANSION_GUARD`]
/// the caller must pass `allow_large`.
pub fn check_expansion(tg: &TensorGraph<'_>, omega: &Support, eps: f64, allow_large: bool) -> Result<ExpansionReport> {
    let p = tg.p();
    let m = tg.m();
    if omega.p() != p {
        return Err(dim(format!("support has p={}, graph has p={p}", omega.p())));
    }
    if !(eps > 0.0 && eps < 0.25 + 1e-15) {
        return Err(param(format!("eps={eps} outside (0, 1/4]")));
    }
    if p > EXPANSION_GUARD && !allow_large {
        return Err(Error::SizeGuard(format!("p={p} > {EXPANSION_GUARD}; pass allow_large to run")));
    }
    let delta = tg.g1.delta().max(tg.g2.delta());
    let n1: Vec<Vec<usize>> = (0..p).map(|i| tg.g1.neighbor_set(i)).collect();
    let n2: Vec<Vec<usize>> = (0..p).map(|i| tg.g2.neighbor_set(i)).collect();

    let mut cover = vec![0u32; m * m];
    for &(i, ip) in omega.cells() {
        for &j in &n1[i] {
            for &jp in &n2[ip] {
                cover[j * m + jp] += 1;
            }
        }
    }
    let neighborhood_size = cover.iter().filter(|&&c| c > 0).count();

    let mut max_out = 0;
    let mut max_in = 0;
    for i in 0..p {
        for ip in 0..p {
            let inside = omega.contains(i, ip);
            let need = if inside { 2 } else { 1 };
            let mut hits = 0;
            for &j in &n1[i] {
                for &jp in &n2[ip] {
                    if cover[j * m + jp] >= need {
                        hits += 1;
                    }
                }
            }
            if inside {
                max_in = max_in.max(hits);
            } else {
                max_out = max_out.max(hits);
            }
        }
    }

    let d2 = (delta * delta) as f64;
    let bound = p as f64 * d2 * (1.0 - eps);
    let budget = eps * d2;
    Ok(ExpansionReport {
        neighborhood_size,
        bound,
        max_collision_outside: max_out,
        max_collision_inside: max_in,
        collision_budget: budget,
        passed: [neighborhood_size as f64 >= bound, max_out as f64 <= budget, max_in as f64 <= budget],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RipReport {
    /// `‖A X Aᵀ‖₁ / (δ² ‖X‖₁)`.
    pub ratio: f64,
    /// `ratio ≥ 1 − 2ε`.
    pub lower_ok: bool,
    /// `ratio ≤ 1` up to float slack; holds for every `X`.
    pub upper_ok: bool,
}

/// l1 isometry ratio of the sketch on `x`. `δ²` is read off the operator as
/// its largest column sum, which is exact for graph adjacency counts.
pub fn check_rip1(op: &SketchOperator, x: &DenseMatrix, eps: f64) -> Result<RipReport> {
    let norm = x.l1();
    if norm == 0.0 {
        return Err(param("ratio undefined for the zero matrix"));
    }
    let d2 = op.l1_operator_norm();
    let ratio = op.forward(x)?.l1() / (d2 * norm);
    Ok(RipReport { ratio, lower_ok: ratio >= 1.0 - 2.0 * eps, upper_ok: ratio <= 1.0 + RIP_UPPER_SLACK })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullspaceReport {
    /// `max ‖V_Ω‖₁ / ‖V_{Ωᶜ}‖₁` over the sampled kernel elements.
    pub max_ratio: f64,
    pub samples: usize,
    /// Worst relative sketch residual of a projected sample.
    pub max_residual: f64,
    /// True when the kernel is trivial (every sample projected to zero).
    pub trivial_kernel: bool,
}

fn omega_ratio(v: &DenseMatrix, omega: &Support) -> Result<f64> {
    let on = project_support(v, omega)?.l1();
    let off = v.l1() - on;
    Ok(if on == 0.0 {
        0.0
    } else if off <= 1e-14 * v.l1() {
        f64::INFINITY
    } else {
        on / off
    })
}

/// Sampled nullspace ratio: Gaussian `V` projected onto the operator's
/// kernel through the factored pseudo-inverse.
pub fn check_nullspace(op: &SketchOperator, omega: &Support, n_samples: usize, seed: u64) -> Result<NullspaceReport> {
    if n_samples == 0 {
        return Err(param("need at least one sample"));
    }
    let (p1, p2) = op.signal_shape();
    if (omega.p(), omega.p()) != (p1, p2) {
        return Err(dim("support and operator disagree"));
    }
    if omega.is_empty() {
        return Ok(NullspaceReport { max_ratio: 0.0, samples: n_samples, max_residual: 0.0, trivial_kernel: false });
    }
    let proj = RangeProjector::new(op);
    let mut rng = seed::rng(seed);
    let mut max_ratio: f64 = 0.0;
    let mut max_residual: f64 = 0.0;
    let mut nontrivial = 0;
    for _ in 0..n_samples {
        let w = DenseMatrix::from_fn(p1, p2, |_, _| StandardNormal.sample(&mut rng));
        let v = proj.project_kernel(op, &w)?;
        let vn = v.frobenius();
        if vn <= 1e-10 * w.frobenius() {
            continue;
        }
        nontrivial += 1;
        let res = op.forward(&v)?.frobenius() / (op.l1_operator_norm() * vn);
        if res > KERNEL_TOL {
            return Err(Error::Kernel(format!("projection residual {res:.3e} > {KERNEL_TOL:e}")));
        }
        max_residual = max_residual.max(res);
        max_ratio = max_ratio.max(omega_ratio(&v, omega)?);
    }
    Ok(NullspaceReport { max_ratio, samples: n_samples, max_residual, trivial_kernel: nontrivial == 0 })
}

/// Orthonormal kernel basis of the materialised `B ⊗ A`, each element
/// reshaped to a `p1 x p2` matrix. Small `p` only.
pub fn dense_kernel_basis(op: &SketchOperator, guard: usize) -> Result<Vec<DenseMatrix>> {
    let (p1, p2) = op.signal_shape();
    let k = op.kron_materialize(guard)?.to_nalgebra();
    let gram = k.transpose() * &k;
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs())).max(1.0);
    let mut basis = Vec::new();
    for (idx, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() <= 1e-10 * lmax {
            let col: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
            basis.push(unvec(&col, p1, p2)?);
        }
    }
    Ok(basis)
}

/// Nullspace ratio over random combinations of a dense kernel basis.
pub fn check_nullspace_dense(
    op: &SketchOperator,
    omega: &Support,
    n_combos: usize,
    seed: u64,
) -> Result<NullspaceReport> {
    let basis = dense_kernel_basis(op, 10)?;
    let (p1, p2) = op.signal_shape();
    if basis.is_empty() || omega.is_empty() {
        return Ok(NullspaceReport {
            max_ratio: 0.0,
            samples: n_combos,
            max_residual: 0.0,
            trivial_kernel: basis.is_empty(),
        });
    }
    let mut rng = seed::rng(seed);
    let mut max_ratio: f64 = 0.0;
    let mut max_residual: f64 = 0.0;
    for _ in 0..n_combos {
        let mut v = DenseMatrix::zeros(p1, p2);
        for b in &basis {
            let c: f64 = StandardNormal.sample(&mut rng);
            v.axpy(c, b);
        }
        let res = op.forward(&v)?.frobenius() / (op.l1_operator_norm() * v.frobenius());
        max_residual = max_residual.max(res);
        max_ratio = max_ratio.max(omega_ratio(&v, omega)?);
    }
    Ok(NullspaceReport { max_ratio, samples: n_combos, max_residual, trivial_kernel: false })
}

/// Two different arrow matrices with the same sketch.
#[derive(Debug, Clone)]
pub struct ArrowWitness {
    pub x: DenseMatrix,
    pub x_tilde: DenseMatrix,
    /// `max |A X Bᵀ − A X̃ Bᵀ|`.
    pub sketch_gap: f64,
    /// `‖A v‖₂ / ‖v‖₂` for the kernel vector used.
    pub kernel_residual: f64,
}

pub const ARROW_TOL: f64 = 1e-10;

/// Builds the arrow matrix `X` and `X̃ = X + v e₁ᵀ` with `v ∈ ker(A)`
/// (normalised to `‖v‖₁ = 1`), extracted as `w − A⁺ A w` for Gaussian `w`.
pub fn arrow_ambiguity_witness(op: &SketchOperator, p_arrow: usize, seed: u64) -> Result<ArrowWitness> {
    if op.signal_shape() != (p_arrow, p_arrow) {
        return Err(dim(format!("operator acts on {:?}, arrow is {p_arrow}x{p_arrow}", op.signal_shape())));
    }
    let a = op.a();
    let mut rng = seed::rng(seed::substream(seed, 1));
    let w = DenseMatrix::from_fn(p_arrow, 1, |_, _| StandardNormal.sample(&mut rng));
    // A⁺ = Aᵀ (A Aᵀ)⁺ on a single column
    let col_op = SketchOperator::from_matrices(&a, &DenseMatrix::identity(1));
    let proj = RangeProjector::new(&col_op);
    let v = proj.project_kernel(&col_op, &w)?;
    let vn = v.frobenius();
    let kernel_residual = if vn > 0.0 { a.matmul(&v)?.frobenius() / vn } else { f64::INFINITY };
    if vn <= 1e-8 * w.frobenius() || kernel_residual > ARROW_TOL {
        return Err(Error::Kernel(format!("no usable kernel vector (norm {vn:.3e}, residual {kernel_residual:.3e})")));
    }
    let v = v.scaled(1.0 / v.l1());
    let x = arrow_matrix(p_arrow, ValueSpec::default(), seed)?;
    let mut x_tilde = x.clone();
    for i in 0..p_arrow {
        x_tilde[(i, 0)] += v[(i, 0)];
    }
    let sketch_gap = op.forward(&x)?.max_abs_diff(&op.forward(&x_tilde)?);
    let scale = op.forward(&x)?.linf().max(1.0);
    if sketch_gap > ARROW_TOL * scale {
        return Err(Error::Kernel(format!("sketches differ by {sketch_gap:.3e}")));
    }
    Ok(ArrowWitness { x, x_tilde, sketch_gap, kernel_residual })
}
