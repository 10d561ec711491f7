use super::prox::solve_p2_warm;
use super::{check_sketch, solve_p1, RecoveryResult, SolverOptions};
use crate::error::{param, Error, Result};
use crate::exec::Exec;
use crate::matrix::DenseMatrix;
use crate::operator::SketchOperator;

const MAX_BISECTIONS: usize = 30;
const KAPPA_RTOL: f64 = 0.01;
/// Decades walked down from `λ_max` while bracketing.
const MAX_DECADES: usize = 8;
/// Floor on the inner stagnation tolerance while searching over `λ`.
const SEARCH_TOL: f64 = 1e-7;

/// `min ‖X‖₁ s.t. ‖A X Bᵀ − Ŷ‖₂ ≤ κ`.
///
/// For `0 < κ < ‖Ŷ‖₂` the constraint is active, so the solution is the
/// penalised minimiser of [`solve_p2`](super::solve_p2) whose residual equals
/// `κ`; the residual is increasing in `λ`. Starting at `λ_max` (where the
/// minimiser is zero) `λ` is divided by ten, warm-started, until the
/// residual drops to `κ`; the bracket is then bisected in `log λ` (at most 30
/// steps) until the residual lands in `[(1 − 1%)κ, κ]`. The bisection point is
/// the log-log interpolant of the bracket ends clamped to its middle 60%.
///
/// `feas_residual` of the result is the ball-constraint violation
/// `max(0, ‖A X Bᵀ − Ŷ‖₂ − κ) / max(1, ‖Ŷ‖₂)`.
pub fn solve_constrained(
    op: &SketchOperator,
    y_hat: &DenseMatrix,
    kappa: f64,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    check_sketch(op, y_hat)?;
    opts.validate()?;
    if kappa < 0.0 || kappa.is_nan() {
        return Err(Error::Infeasible);
    }
    if kappa == 0.0 {
        return solve_p1(op, y_hat, opts);
    }
    let (p1, p2) = op.signal_shape();
    let y_norm = y_hat.frobenius();
    let finish = |x: DenseMatrix, iters: usize, hit: bool| -> Result<RecoveryResult> {
        let res = op.forward(&x)?.sub(y_hat).frobenius();
        let mut out = RecoveryResult::evaluate(op, y_hat, x, iters, hit)?;
        out.feas_residual = (res - kappa).max(0.0) / y_norm.max(1.0);
        Ok(out)
    };
    if y_norm <= kappa {
        return finish(DenseMatrix::zeros(p1, p2), 0, true);
    }
    let lam_max = 2.0 * op.adjoint(y_hat)?.linf();
    if lam_max == 0.0 {
        // Ŷ orthogonal to the range: no X reduces the residual below ‖Ŷ‖
        return finish(DenseMatrix::zeros(p1, p2), 0, false);
    }

    let lip = 2.0 * op.spectral_norm_sq(30, 0x5eed);
    let inner = SolverOptions { tol_obj: opts.tol_obj.max(SEARCH_TOL), ..opts.clone() };
    let mut total_iters = 0;
    let mut solve = |log_lam: f64, warm: &DenseMatrix| -> Result<(DenseMatrix, f64)> {
        let r = solve_p2_warm(op, y_hat, log_lam.exp(), &inner, Some(warm), Some(lip))?;
        total_iters += r.iterations;
        let res = op.forward(&r.x)?.sub(y_hat).frobenius();
        Ok((r.x, res))
    };
    let hit = |res: f64| res <= kappa && res >= (1.0 - KAPPA_RTOL) * kappa;

    // (log λ, residual) at the bracket ends; hi starts at λ_max with X = 0
    let (mut log_hi, mut res_hi) = (lam_max.ln(), y_norm);
    let mut x_hi = DenseMatrix::zeros(p1, p2);
    let mut lo: Option<(f64, f64, DenseMatrix)> = None;
    for _ in 0..MAX_DECADES {
        let log_lam = log_hi - std::f64::consts::LN_10;
        let (x, res) = solve(log_lam, &x_hi)?;
        if hit(res) {
            return finish(x, total_iters, true);
        }
        if res <= kappa {
            lo = Some((log_lam, res, x));
            break;
        }
        (log_hi, res_hi, x_hi) = (log_lam, res, x);
    }
    let Some((mut log_lo, mut res_lo, mut x_lo)) = lo else {
        return finish(x_hi, total_iters, false);
    };

    for _ in 0..MAX_BISECTIONS {
        let t = ((kappa.ln() - res_lo.ln()) / (res_hi.ln() - res_lo.ln())).clamp(0.2, 0.8);
        let mid = log_lo + t * (log_hi - log_lo);
        let (x, res) = solve(mid, &x_lo)?;
        if hit(res) {
            return finish(x, total_iters, true);
        }
        if res > kappa {
            (log_hi, res_hi) = (mid, res);
        } else {
            (log_lo, res_lo, x_lo) = (mid, res, x);
        }
    }
    // closest feasible point found
    finish(x_lo, total_iters, false)
}

/// One cross-validation fold: the fold's own sketch-domain empirical
/// covariance and its sample count.
#[derive(Debug, Clone)]
pub struct FoldSketch {
    pub sketch: DenseMatrix,
    pub count: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CvOutcome {
    /// Winning multiplier on the training sketch norm.
    pub factor: f64,
    /// `(factor, mean held-out loss)` for every grid point.
    pub losses: Vec<(f64, f64)>,
}

impl CvOutcome {
    /// κ for the pooled data: the winning factor times `‖Ŷ‖₂`, scaled by
    /// `√(n_train / n)` because sampling noise shrinks like `1/√n`.
    pub fn kappa_for(&self, pooled: &DenseMatrix, n_train: usize, n_total: usize) -> f64 {
        self.factor * pooled.frobenius() * (n_train as f64 / n_total as f64).sqrt()
    }
}

/// k-fold selection of `κ = 2^e · ‖Ŷ_train‖₂` over `exponents`, scoring each
/// candidate by `‖A X* Aᵀ − Ŷ_heldout‖₂` averaged over folds.
pub fn cv_select_kappa(
    op: &SketchOperator,
    folds: &[FoldSketch],
    exponents: std::ops::RangeInclusive<i32>,
    opts: &SolverOptions,
    exec: Exec,
) -> Result<CvOutcome> {
    if folds.len() < 2 {
        return Err(param("cross-validation needs at least two folds"));
    }
    let factors: Vec<f64> = exponents.map(|e| 2f64.powi(e)).collect();
    if factors.is_empty() {
        return Err(param("empty kappa grid"));
    }
    let total: usize = folds.iter().map(|f| f.count).sum();
    let jobs: Vec<(usize, usize)> = (0..factors.len()).flat_map(|g| (0..folds.len()).map(move |k| (g, k))).collect();
    let losses = exec.map_items(&jobs, |&(g, k)| -> Result<f64> {
        let held = &folds[k];
        let n_train = total - held.count;
        let mut train = DenseMatrix::zeros(held.sketch.rows(), held.sketch.cols());
        for (i, f) in folds.iter().enumerate() {
            if i != k {
                train.axpy(f.count as f64 / n_train as f64, &f.sketch);
            }
        }
        let kappa = factors[g] * train.frobenius();
        let r = solve_constrained(op, &train, kappa, opts)?;
        Ok(op.forward(&r.x)?.sub(&held.sketch).frobenius())
    });
    let mut mean = vec![0.0; factors.len()];
    for (&(g, _), l) in jobs.iter().zip(losses) {
        mean[g] += l? / folds.len() as f64;
    }
    let best = (0..factors.len())
        .min_by(|&a, &b| mean[a].partial_cmp(&mean[b]).expect("finite losses"))
        .expect("non-empty grid");
    Ok(CvOutcome { factor: factors[best], losses: factors.into_iter().zip(mean).collect() })
}
