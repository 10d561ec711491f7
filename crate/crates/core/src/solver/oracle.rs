use super::simplex::solve_standard_form;
use super::{check_sketch, RecoveryResult};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::operator::{unvec, vec, SketchOperator};

pub const LP_MAX_P: usize = 10;
pub const LP_MAX_M: usize = 8;

/// Exact `min ‖X‖₁ s.t. (B ⊗ A) vec(X) = vec(Y)` for small instances.
///
/// Split `x = u − v` with `u, v ≥ 0` and minimise `Σ(u + v)`, which equals
/// the `t`-epigraph form at the optimum. `iterations` reports simplex pivots.
pub fn lp_oracle(op: &SketchOperator, y: &DenseMatrix) -> Result<RecoveryResult> {
    check_sketch(op, y)?;
    let (p1, p2) = op.signal_shape();
    let (m1, m2) = op.sketch_shape();
    if p1.max(p2) > LP_MAX_P || m1.max(m2) > LP_MAX_M {
        return Err(Error::SizeGuard(format!(
            "lp oracle limited to p <= {LP_MAX_P}, m <= {LP_MAX_M}; got p={}, m={}",
            p1.max(p2),
            m1.max(m2)
        )));
    }
    let k = op.kron_materialize(LP_MAX_P)?;
    let n = k.cols();
    let rows: Vec<Vec<f64>> = (0..k.rows())
        .map(|r| {
            let kr = k.row(r);
            kr.iter().copied().chain(kr.iter().map(|v| -v)).collect()
        })
        .collect();
    let rhs = vec(y);
    let cost = vec![1.0; 2 * n];
    let sol = solve_standard_form(&rows, &rhs, &cost)?;
    let x: Vec<f64> = (0..n).map(|i| sol.x[i] - sol.x[n + i]).collect();
    let x = unvec(&x, p1, p2)?;
    RecoveryResult::evaluate(op, y, x, sol.pivots, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::gen_left_regular;
    use crate::solver::{solve_p1, SolverOptions};

    #[test]
    fn zero_sketch() {
        let g = gen_left_regular(5, 3, 2, 1).unwrap();
        let op = SketchOperator::from_graph(&g, false);
        let r = lp_oracle(&op, &DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn guard() {
        let g = gen_left_regular(11, 3, 2, 1).unwrap();
        let op = SketchOperator::from_graph(&g, false);
        assert!(matches!(lp_oracle(&op, &DenseMatrix::zeros(3, 3)), Err(Error::SizeGuard(_))));
        let g = gen_left_regular(6, 9, 2, 1).unwrap();
        let op = SketchOperator::from_graph(&g, false);
        assert!(matches!(lp_oracle(&op, &DenseMatrix::zeros(9, 9)), Err(Error::SizeGuard(_))));
    }

    #[test]
    fn diagonal_instance_matches_admm() {
        let g = gen_left_regular(5, 3, 2, 4).unwrap();
        let op = SketchOperator::from_graph(&g, false);
        let x = DenseMatrix::diag(&[1.0, -2.0, 0.5, 3.0, -1.5]);
        let y = op.forward(&x).unwrap();
        let lp = lp_oracle(&op, &y).unwrap();
        let admm = solve_p1(&op, &y, &SolverOptions::default()).unwrap();
        assert!(lp.feas_residual < 1e-9);
        assert!((lp.objective - admm.objective).abs() <= 1e-6, "{} vs {}", lp.objective, admm.objective);
        assert!(lp.objective <= admm.objective + 1e-6);
    }
}
