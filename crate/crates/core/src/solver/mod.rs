//! l1 recovery programs.
//!
//! * [`solve_p1`]: `min ‖X‖₁ s.t. A X Bᵀ = Y` (operator splitting).
//! * [`solve_p2`]: `min ‖A X Bᵀ − Ŷ‖₂² + λ‖X‖₁` (accelerated proximal gradient).
//! * [`solve_constrained`]: `min ‖X‖₁ s.t. ‖A X Bᵀ − Ŷ‖₂ ≤ κ` (bisection over λ).
//! * [`lp_oracle`]: exact LP solution for small instances (dense simplex).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::matrix::DenseMatrix;
use crate::operator::SketchOperator;

mod admm;
mod constrained;
mod oracle;
mod prox;
pub mod simplex;

pub use admm::{solve_p1, solve_p1_with};
pub use constrained::{cv_select_kappa, solve_constrained, CvOutcome, FoldSketch};
pub use oracle::{lp_oracle, LP_MAX_M, LP_MAX_P};
pub use prox::{soft_threshold, solve_p2, solve_p2_warm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative feasibility tolerance on `‖A X Bᵀ − Y‖₂ / max(1, ‖Y‖₂)`.
    pub tol_feas: f64,
    /// Stagnation tolerance for iterates and objective.
    pub tol_obj: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Residual-balancing updates of `rho`.
    pub adaptive_rho: bool,
    /// Re-solve least squares on the detected support after ADMM.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol_feas: 1e-8, tol_obj: 1e-9, max_iter: 50_000, rho: 1.0, adaptive_rho: true, polish: true }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_feas > 0.0 && self.tol_obj > 0.0 && self.rho > 0.0) {
            return Err(param("solver tolerances and rho must be positive"));
        }
        if self.max_iter == 0 {
            return Err(param("max_iter must be at least 1"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let o: Self = serde_json::from_str(text)?;
        o.validate()?;
        Ok(o)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Outcome of a recovery program.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryResult {
    #[serde(skip)]
    pub x: DenseMatrix,
    /// `‖X*‖₁`.
    pub objective: f64,
    /// `‖A X* Bᵀ − Y‖₂ / max(1, ‖Y‖₂)`; for the κ-ball program, the amount
    /// by which the residual exceeds κ, on the same scale.
    pub feas_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RecoveryResult {
    pub(crate) fn evaluate(
        op: &SketchOperator,
        y: &DenseMatrix,
        x: DenseMatrix,
        iterations: usize,
        converged: bool,
    ) -> Result<Self> {
        let feas_residual = feasibility_residual(op, &x, y)?;
        Ok(Self { objective: x.l1(), x, feas_residual, iterations, converged })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct")
    }
}

pub fn feasibility_residual(op: &SketchOperator, x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    let r = op.forward(x)?.sub(y);
    Ok(r.frobenius() / y.frobenius().max(1.0))
}

pub(crate) fn check_sketch(op: &SketchOperator, y: &DenseMatrix) -> Result<()> {
    if y.shape() != op.sketch_shape() {
        return Err(crate::error::dim(format!("sketch is {:?}, operator produces {:?}", y.shape(), op.sketch_shape())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn options_json() {
        let o = SolverOptions::from_json(r#"{"max_iter": 10, "rho": 2.5}"#).unwrap();
        assert_eq!(o.max_iter, 10);
        assert_eq!(o.rho, 2.5);
        assert_eq!(o.tol_feas, 1e-8);
        assert!(SolverOptions::from_json(r#"{"max_iter": 0}"#).is_err());
        assert!(SolverOptions::from_json(r#"{"tol_obj": -1}"#).is_err());
    }
}
