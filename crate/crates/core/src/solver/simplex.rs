//! Dense two-phase tableau simplex for `min cᵀx s.t. A x = b, x ≥ 0`.
//!
//! Pivoting follows Bland's rule (lowest-index entering column, ties in the
//! ratio test broken by lowest basic variable index), so the pivot sequence
//! is deterministic and cycling cannot occur. Intended for problems with at
//! most a few hundred columns.

use crate::error::{dim, Error, Result};

const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let pv = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= pv;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pvv) in row.iter_mut().zip(&prow) {
                    *v -= f * pvv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn rhs(&self, r: usize) -> f64 {
        self.t[r][self.cols]
    }

    /// Run Bland's-rule simplex for `cost` restricted to `allowed` columns.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool, max_pivots: usize) -> Result<()> {
        loop {
            if self.pivots > max_pivots {
                return Err(Error::Parameter(format!("simplex exceeded {max_pivots} pivots")));
            }
            let scale = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
            let entering = (0..self.cols).filter(|&j| allowed(j)).find(|&j| {
                let reduced =
                    cost[j] - self.basis.iter().enumerate().map(|(r, &b)| cost[b] * self.t[r][j]).sum::<f64>();
                reduced < -PIVOT_TOL * scale
            });
            let Some(c) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let a = self.t[r][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= PIVOT_TOL * lratio.abs().max(1.0);
                            if ratio < lratio && !tie || tie && self.basis[r] < self.basis[lr] {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Err(Error::Unbounded) };
            self.pivot(r, c);
        }
    }
}

/// Solve `min cᵀx s.t. A x = b, x ≥ 0` with `A` given as dense rows.
pub fn solve_standard_form(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let rows = a.len();
    let n = c.len();
    if b.len() != rows || a.iter().any(|r| r.len() != n) {
        return Err(dim("constraint matrix, rhs and cost disagree"));
    }
    let cols = n + rows; // structural + artificial
    let mut t = Vec::with_capacity(rows);
    for (i, (row, &bi)) in a.iter().zip(b).enumerate() {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut tr = vec![0.0; cols + 1];
        for (j, v) in row.iter().enumerate() {
            tr[j] = sign * v;
        }
        tr[n + i] = 1.0;
        tr[cols] = sign * bi;
        t.push(tr);
    }
    let mut tab = Tableau { t, basis: (n..n + rows).collect(), cols, pivots: 0 };
    let max_pivots = 200 * (cols + rows).max(10);

    // phase 1: drive artificials out
    let mut phase1 = vec![0.0; cols];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    tab.optimize(&phase1, &|_| true, max_pivots)?;
    let infeas: f64 = tab.basis.iter().enumerate().filter(|(_, &bv)| bv >= n).map(|(r, _)| tab.rhs(r)).sum();
    let bscale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if infeas > 1e-7 * bscale {
        return Err(Error::Infeasible);
    }

    // pivot zero-level artificials out of the basis; drop redundant rows
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= n {
            let col = (0..n).find(|&j| tab.t[r][j].abs() > PIVOT_TOL);
            match col {
                Some(j) => {
                    tab.pivot(r, j);
                    r += 1;
                }
                None => {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    // phase 2 over structural columns only
    let mut cost = c.to_vec();
    cost.resize(cols, 0.0);
    tab.optimize(&cost, &|j| j < n, max_pivots)?;

    let mut x = vec![0.0; n];
    for (r, &bv) in tab.basis.iter().enumerate() {
        if bv < n {
            x[bv] = tab.rhs(r);
        }
    }
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Ok(LpSolution { x, objective, pivots: tab.pivots })
}
