//! The tensor-product sketch `X ↦ A X Bᵀ`, its adjoint, vectorization, and
//! a factored pseudo-inverse for least-squares steps.
//!
//! `vec` stacks columns, so `vec(A X Bᵀ) = (B ⊗ A) vec(X)`.

use nalgebra::SymmetricEigen;

use crate::ensemble::BipartiteGraph;
use crate::error::{dim, Error, Result};
use crate::matrix::DenseMatrix;
use crate::seed;

/// Largest `p` accepted by [`SketchOperator::kron_materialize`] by default.
pub const KRON_GUARD: usize = 64;

/// Sparse column storage: for each column, `(row, weight)` pairs.
#[derive(Debug, Clone, PartialEq)]
struct SparseCols {
    rows: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseCols {
    fn from_dense(a: &DenseMatrix) -> Self {
        let cols = (0..a.cols())
            .map(|i| (0..a.rows()).filter(|&j| a[(j, i)] != 0.0).map(|j| (j, a[(j, i)])).collect())
            .collect();
        Self { rows: a.rows(), cols }
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn to_dense(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.rows, self.cols.len());
        for (i, col) in self.cols.iter().enumerate() {
            for &(j, w) in col {
                a[(j, i)] += w;
            }
        }
        a
    }
}

/// The pair `(A, B)` acting as `X ↦ A X Bᵀ`.
///
/// `A` is `m1 x p1` and `B` is `m2 x p2`; the square case used throughout
/// has `p1 = p2 = p` and `m1 = m2 = m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchOperator {
    a: SparseCols,
    b: SparseCols,
    shared: bool,
}

impl SketchOperator {
    pub fn from_matrices(a: &DenseMatrix, b: &DenseMatrix) -> Self {
        Self { a: SparseCols::from_dense(a), b: SparseCols::from_dense(b), shared: false }
    }

    /// `B = A`.
    pub fn shared_matrix(a: &DenseMatrix) -> Self {
        let s = SparseCols::from_dense(a);
        Self { a: s.clone(), b: s, shared: true }
    }

    pub fn from_graphs(g1: &BipartiteGraph, g2: &BipartiteGraph, clip_binary: bool) -> Self {
        Self::from_matrices(&g1.adjacency(clip_binary), &g2.adjacency(clip_binary))
    }

    pub fn from_graph(g: &BipartiteGraph, clip_binary: bool) -> Self {
        Self::shared_matrix(&g.adjacency(clip_binary))
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    /// Shape of the signal `X`.
    pub fn signal_shape(&self) -> (usize, usize) {
        (self.a.ncols(), self.b.ncols())
    }

    /// Shape of the sketch `Y`.
    pub fn sketch_shape(&self) -> (usize, usize) {
        (self.a.rows, self.b.rows)
    }

    pub fn a(&self) -> DenseMatrix {
        self.a.to_dense()
    }

    pub fn b(&self) -> DenseMatrix {
        self.b.to_dense()
    }

    /// `A X Bᵀ`, computed as `(A X) Bᵀ` from the sparse columns.
    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.shape() != self.signal_shape() {
            return Err(dim(format!("signal is {:?}, operator expects {:?}", x.shape(), self.signal_shape())));
        }
        let (m1, m2) = self.sketch_shape();
        let p2 = self.b.ncols();
        // T = A X  (m1 x p2)
        let mut t = DenseMatrix::zeros(m1, p2);
        for (i, col) in self.a.cols.iter().enumerate() {
            let xr = x.row(i);
            for &(j, w) in col {
                for (tv, xv) in t.row_mut(j).iter_mut().zip(xr) {
                    *tv += w * xv;
                }
            }
        }
        // Y = T Bᵀ  (m1 x m2)
        let mut y = DenseMatrix::zeros(m1, m2);
        for r in 0..m1 {
            let tr = t.row(r).to_vec();
            let yr = y.row_mut(r);
            for (ip, col) in self.b.cols.iter().enumerate() {
                let tv = tr[ip];
                if tv == 0.0 {
                    continue;
                }
                for &(jp, w) in col {
                    yr[jp] += w * tv;
                }
            }
        }
        Ok(y)
    }

    /// `Aᵀ M B`.
    pub fn adjoint(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        if m.shape() != self.sketch_shape() {
            return Err(dim(format!("sketch is {:?}, operator expects {:?}", m.shape(), self.sketch_shape())));
        }
        let (p1, p2) = self.signal_shape();
        let m2 = self.b.rows;
        // U = Aᵀ M  (p1 x m2)
        let mut u = DenseMatrix::zeros(p1, m2);
        for (i, col) in self.a.cols.iter().enumerate() {
            let ur = u.row_mut(i);
            for &(j, w) in col {
                for (uv, mv) in ur.iter_mut().zip(m.row(j)) {
                    *uv += w * mv;
                }
            }
        }
        // out = U B  (p1 x p2)
        let mut out = DenseMatrix::zeros(p1, p2);
        for r in 0..p1 {
            let ur = u.row(r);
            let or = out.row_mut(r);
            for (ip, col) in self.b.cols.iter().enumerate() {
                or[ip] = col.iter().map(|&(jp, w)| w * ur[jp]).sum();
            }
        }
        Ok(out)
    }

    /// Dense `B ⊗ A` (`m1 m2 x p1 p2`) with column-stacking order, so that
    /// `K vec(X) = vec(forward(X))`. Refused when either signal side exceeds
    /// `guard`.
    pub fn kron_materialize(&self, guard: usize) -> Result<DenseMatrix> {
        let (p1, p2) = self.signal_shape();
        if p1.max(p2) > guard {
            return Err(Error::SizeGuard(format!("p={} exceeds materialization guard {guard}", p1.max(p2))));
        }
        let (m1, m2) = self.sketch_shape();
        let a = self.a();
        let b = self.b();
        let mut k = DenseMatrix::zeros(m1 * m2, p1 * p2);
        for jp in 0..m2 {
            for ip in 0..p2 {
                let bv = b[(jp, ip)];
                if bv == 0.0 {
                    continue;
                }
                for j in 0..m1 {
                    for i in 0..p1 {
                        k[(j + m1 * jp, i + p1 * ip)] = bv * a[(j, i)];
                    }
                }
            }
        }
        Ok(k)
    }

    /// Largest column sum of `|B ⊗ A|` (the induced l1 norm), `δ²` for graph
    /// adjacency with counts.
    pub fn l1_operator_norm(&self) -> f64 {
        let colsum =
            |s: &SparseCols| s.cols.iter().map(|c| c.iter().map(|(_, w)| w.abs()).sum::<f64>()).fold(0.0, f64::max);
        colsum(&self.a) * colsum(&self.b)
    }

    /// Power-iteration estimate of `‖B ⊗ A‖₂²`.
    pub fn spectral_norm_sq(&self, iters: usize, seed: u64) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let (p1, p2) = self.signal_shape();
        let mut rng = seed::rng(seed);
        let mut v = DenseMatrix::from_fn(p1, p2, |_, _| StandardNormal.sample(&mut rng));
        let mut est = 0.0;
        for _ in 0..iters.max(1) {
            let n = v.frobenius();
            if n == 0.0 {
                return 0.0;
            }
            v = v.scaled(1.0 / n);
            let w = self.adjoint(&self.forward(&v).expect("shape")).expect("shape");
            est = v.dot(&w);
            v = w;
        }
        est
    }
}

/// Column-stacking vectorization.
pub fn vec(x: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.rows() * x.cols());
    for j in 0..x.cols() {
        for i in 0..x.rows() {
            out.push(x[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vec`].
pub fn unvec(x: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    if x.len() != rows * cols {
        return Err(dim(format!("vector of length {} cannot be a {rows}x{cols} matrix", x.len())));
    }
    Ok(DenseMatrix::from_fn(rows, cols, |i, j| x[i + rows * j]))
}

/// Applies `K⁺ = Kᵀ (K Kᵀ)⁺` for `K = B ⊗ A` using
/// `(K Kᵀ)⁺ = (B Bᵀ)⁺ ⊗ (A Aᵀ)⁺`, so each application costs two small dense
/// products plus one adjoint.
#[derive(Debug, Clone)]
pub struct RangeProjector {
    ga: DenseMatrix,
    gb: DenseMatrix,
}

/// Relative eigenvalue cutoff for the Gram pseudo-inverses.
const PINV_RCOND: f64 = 1e-11;

impl RangeProjector {
    pub fn new(op: &SketchOperator) -> Self {
        let a = op.a();
        let b = op.b();
        let ga = gram_pinv(&a);
        let gb = if op.is_shared() { ga.clone() } else { gram_pinv(&b) };
        Self { ga, gb }
    }

    /// Minimum-norm `X` with `A X Bᵀ` equal to the projection of `r` onto the
    /// operator's range.
    pub fn pinv_apply(&self, op: &SketchOperator, r: &DenseMatrix) -> Result<DenseMatrix> {
        let w = self.ga.matmul(r)?.matmul(&self.gb)?;
        op.adjoint(&w)
    }

    /// Euclidean projection of `v` onto `{X : A X Bᵀ = y}` (least-squares
    /// affine set when `y` is outside the range).
    pub fn project_affine(&self, op: &SketchOperator, v: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
        let r = op.forward(v)?.sub(y);
        let corr = self.pinv_apply(op, &r)?;
        Ok(v.sub(&corr))
    }

    /// Projection onto the kernel of the operator.
    pub fn project_kernel(&self, op: &SketchOperator, v: &DenseMatrix) -> Result<DenseMatrix> {
        let corr = self.pinv_apply(op, &op.forward(v)?)?;
        Ok(v.sub(&corr))
    }

    /// `A A† y B†ᵀ Bᵀ`: the part of `y` reachable by the operator.
    pub fn range_component(&self, op: &SketchOperator, y: &DenseMatrix) -> Result<DenseMatrix> {
        op.forward(&self.pinv_apply(op, y)?)
    }
}

fn gram_pinv(a: &DenseMatrix) -> DenseMatrix {
    let g = a.matmul(&a.transpose()).expect("square gram").to_nalgebra();
    let eig = SymmetricEigen::new(g);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |acc, &l| acc.max(l.abs()));
    let cutoff = PINV_RCOND * lmax.max(1.0);
    let n = eig.eigenvalues.len();
    let mut out = DenseMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= cutoff {
            continue;
        }
        let inv = 1.0 / l;
        let u = eig.eigenvectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += inv * u[i] * u[j];
            }
        }
    }
    out
}
