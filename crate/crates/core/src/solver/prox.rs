use super::{check_sketch, RecoveryResult, SolverOptions};
use crate::error::{param, Result};
use crate::matrix::DenseMatrix;
use crate::operator::SketchOperator;

const POWER_ITERS: usize = 30;

/// Entrywise `sign(v) · max(|v| − t, 0)`.
pub fn soft_threshold(v: &DenseMatrix, t: f64) -> DenseMatrix {
    v.map(|x| {
        if x > t {
            x - t
        } else if x < -t {
            x + t
        } else {
            0.0
        }
    })
}

/// `min ‖A X Bᵀ − Ŷ‖₂² + λ‖X‖₁` from a zero start.
pub fn solve_p2(op: &SketchOperator, y_hat: &DenseMatrix, lambda: f64, opts: &SolverOptions) -> Result<RecoveryResult> {
    solve_p2_warm(op, y_hat, lambda, opts, None, None)
}

/// Monotone FISTA with backtracking and gradient-based restarts.
///
/// The step starts at `1/L` with `L = 2‖B ⊗ A‖₂²` estimated by power
/// iteration (or taken from `lipschitz`); backtracking doubles `L` whenever
/// the quadratic upper model is violated.
pub fn solve_p2_warm(
    op: &SketchOperator,
    y_hat: &DenseMatrix,
    lambda: f64,
    opts: &SolverOptions,
    x0: Option<&DenseMatrix>,
    lipschitz: Option<f64>,
) -> Result<RecoveryResult> {
    check_sketch(op, y_hat)?;
    opts.validate()?;
    if !(lambda > 0.0) {
        return Err(param(format!("lambda must be positive, got {lambda}")));
    }
    let (p1, p2) = op.signal_shape();
    let mut lip = lipschitz.unwrap_or_else(|| 2.0 * op.spectral_norm_sq(POWER_ITERS, 0x5eed));
    if lip <= 0.0 {
        // zero operator: the penalty alone decides
        return RecoveryResult::evaluate(op, y_hat, DenseMatrix::zeros(p1, p2), 0, true);
    }

    let smooth = |x: &DenseMatrix| -> Result<(f64, DenseMatrix)> {
        let r = op.forward(x)?.sub(y_hat);
        let f = r.dot(&r);
        Ok((f, r))
    };
    let objective = |f: f64, x: &DenseMatrix| f + lambda * x.l1();

    let mut x = x0.cloned().unwrap_or_else(|| DenseMatrix::zeros(p1, p2));
    let (fx, _) = smooth(&x)?;
    let mut fobj = objective(fx, &x);
    let mut yk = x.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let (fy, ry) = smooth(&yk)?;
        let grad = op.adjoint(&ry)?.scaled(2.0);
        // backtracking on the quadratic model at yk
        let (z, fz) = loop {
            let mut step = yk.clone();
            step.axpy(-1.0 / lip, &grad);
            let z = soft_threshold(&step, lambda / lip);
            let d = z.sub(&yk);
            let (fz, _) = smooth(&z)?;
            let model = fy + grad.dot(&d) + 0.5 * lip * d.dot(&d);
            if fz <= model + 1e-12 * fy.abs().max(1.0) {
                break (z, fz);
            }
            lip *= 2.0;
        };
        let fobj_z = objective(fz, &z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        let moved = z.sub(&yk).frobenius();
        let monotone_ok = fobj_z <= fobj;
        if monotone_ok {
            x = z.clone();
        }
        fobj = fobj.min(fobj_z);

        // restart momentum when the gradient mapping opposes the last move
        let restart = !monotone_ok || yk.sub(&z).dot(&z.sub(&x_prev)) > 0.0;
        if restart {
            t = 1.0;
            yk = x.clone();
        } else {
            // y = x + (t/t')(z − x) + ((t−1)/t')(x − x_prev)
            let mut ynext = x.clone();
            ynext.axpy(t / t_next, &z.sub(&x));
            ynext.axpy((t - 1.0) / t_next, &x.sub(&x_prev));
            yk = ynext;
            t = t_next;
        }

        // ‖z − y‖ is the scaled gradient mapping; zero exactly at a minimiser
        if moved <= opts.tol_obj * x.frobenius().max(1.0) {
            converged = true;
            break;
        }
    }
    RecoveryResult::evaluate(op, y_hat, x, iterations, converged)
}
