use nalgebra::{DMatrix, DVector};

use super::{check_sketch, RecoveryResult, SolverOptions};
use crate::error::Result;
use crate::matrix::DenseMatrix;
use crate::operator::{RangeProjector, SketchOperator};

use super::prox::soft_threshold;

/// Basis pursuit `min ‖X‖₁ s.t. A X Bᵀ = Y`.
///
/// Scaled-form ADMM on the split `X = Z`: exact Euclidean projection onto the
/// affine feasible set, entrywise soft thresholding, residual-balanced
/// penalty. Hitting `max_iter` is reported through `converged = false`.
pub fn solve_p1(op: &SketchOperator, y: &DenseMatrix, opts: &SolverOptions) -> Result<RecoveryResult> {
    check_sketch(op, y)?;
    let proj = RangeProjector::new(op);
    solve_p1_with(op, &proj, y, opts)
}

/// [`solve_p1`] with a caller-owned projector (reusable across sketches of
/// the same operator).
pub fn solve_p1_with(
    op: &SketchOperator,
    proj: &RangeProjector,
    y: &DenseMatrix,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    check_sketch(op, y)?;
    opts.validate()?;
    let (p1, p2) = op.signal_shape();
    if y.linf() == 0.0 {
        return RecoveryResult::evaluate(op, y, DenseMatrix::zeros(p1, p2), 0, true);
    }

    let mut rho = opts.rho;
    let mut z = DenseMatrix::zeros(p1, p2);
    let mut u = DenseMatrix::zeros(p1, p2);
    let mut x = z.clone();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        x = proj.project_affine(op, &z.sub(&u), y)?;
        let z_old = z;
        let mut v = x.clone();
        v.axpy(1.0, &u);
        z = soft_threshold(&v, 1.0 / rho);
        u.axpy(1.0, &x);
        u.axpy(-1.0, &z);

        let r = x.max_abs_diff(&z);
        let s = rho * z.max_abs_diff(&z_old);
        let scale = x.linf().max(z.linf()).max(1.0);
        if r <= opts.tol_obj * scale && s <= opts.tol_obj * (rho * u.linf()).max(1.0) {
            converged = true;
            break;
        }
        if opts.adaptive_rho && iterations % 10 == 0 {
            if r > 10.0 * s {
                rho *= 2.0;
                u = u.scaled(0.5);
            } else if s > 10.0 * r {
                rho *= 0.5;
                u = u.scaled(2.0);
            }
        }
    }

    let mut best = RecoveryResult::evaluate(op, y, x, iterations, false)?;
    if opts.polish {
        if let Some(polished) = polish(op, y, &z)? {
            if polished.feas_residual <= opts.tol_feas
                && polished.objective <= best.objective + opts.tol_obj * (1.0 + y.l1())
            {
                best = RecoveryResult { iterations, ..polished };
            }
        }
    }
    best.converged = converged && best.feas_residual <= opts.tol_feas;
    Ok(best)
}

/// Least squares restricted to the support of `z` via the normal equations.
/// Returns `None` when the support is too large to determine or the
/// restricted Gram matrix is not positive definite.
fn polish(op: &SketchOperator, y: &DenseMatrix, z: &DenseMatrix) -> Result<Option<RecoveryResult>> {
    let (p1, p2) = op.signal_shape();
    let (m1, m2) = op.sketch_shape();
    let cutoff = 1e-7 * z.linf().max(1e-300);
    let cells: Vec<(usize, usize)> =
        (0..p1).flat_map(|i| (0..p2).map(move |j| (i, j))).filter(|&(i, j)| z[(i, j)].abs() > cutoff).collect();
    let rows = m1 * m2;
    if cells.is_empty() || cells.len() > rows {
        return Ok(None);
    }
    let a = op.a();
    let b = op.b();
    // column (i,j) of B ⊗ A restricted: vec(a_i b_jᵀ)
    let k = DMatrix::from_fn(rows, cells.len(), |r, c| {
        let (i, j) = cells[c];
        let (ra, rb) = (r % m1, r / m1);
        a[(ra, i)] * b[(rb, j)]
    });
    let rhs = DVector::from_iterator(rows, (0..rows).map(|r| y[(r % m1, r / m1)]));
    let Some(chol) = (k.transpose() * &k).cholesky() else {
        return Ok(None);
    };
    let sol = chol.solve(&(k.transpose() * rhs));
    let mut x = DenseMatrix::zeros(p1, p2);
    for (c, &(i, j)) in cells.iter().enumerate() {
        x[(i, j)] = sol[c];
    }
    Ok(Some(RecoveryResult::evaluate(op, y, x, 0, true)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{gen_distributed_matrix, gen_distributed_support, gen_left_regular, ValueSpec};

    #[test]
    fn zero_sketch_gives_zero() {
        let g = gen_left_regular(8, 4, 2, 0).unwrap();
        let op = SketchOperator::from_graph(&g, false);
        let r = solve_p1(&op, &DenseMatrix::zeros(4, 4), &SolverOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.x, DenseMatrix::zeros(8, 8));
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let g = gen_left_regular(8, 4, 2, 0).unwrap();
        let op = SketchOperator::from_graph(&g, false);
        assert!(solve_p1(&op, &DenseMatrix::zeros(3, 4), &SolverOptions::default()).is_err());
    }

    #[test]
    fn recovers_easy_instance() {
        let p = 20;
        let g = gen_left_regular(p, 20, 3, 5).unwrap();
        let op = SketchOperator::from_graph(&g, false);
        let s = gen_distributed_support(p, 2, 5).unwrap();
        let x = gen_distributed_matrix(&s, ValueSpec::default(), 5).unwrap();
        let y = op.forward(&x).unwrap();
        let r = solve_p1(&op, &y, &SolverOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.feas_residual <= 1e-8);
        assert!(r.x.max_abs_diff(&x) <= 1e-6, "err {}", r.x.max_abs_diff(&x));
    }

    #[test]
    fn iteration_cap_flags_nonconvergence() {
        let p = 20;
        let g = gen_left_regular(p, 10, 3, 1).unwrap();
        let op = SketchOperator::from_graph(&g, false);
        let s = gen_distributed_support(p, 3, 1).unwrap();
        let x = gen_distributed_matrix(&s, ValueSpec::default(), 1).unwrap();
        let y = op.forward(&x).unwrap();
        let opts = SolverOptions { max_iter: 3, polish: false, ..Default::default() };
        let r = solve_p1(&op, &y, &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }
}
