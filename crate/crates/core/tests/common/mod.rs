#![allow(dead_code)]

use std::collections::BTreeSet;

use tensor_sketch::{DenseMatrix, Support, TensorGraph};

type Cell = (usize, usize);

fn pair_neighbors(tg: &TensorGraph<'_>, (i, ip): Cell) -> BTreeSet<Cell> {
    tg.g1.targets(i).iter().flat_map(|&j| tg.g2.targets(ip).iter().map(move |&jp| (j, jp))).collect()
}

fn union_without(tg: &TensorGraph<'_>, omega: &Support, skip: Option<Cell>) -> BTreeSet<Cell> {
    omega.cells().iter().filter(|&&c| Some(c) != skip).flat_map(|&c| pair_neighbors(tg, c)).collect()
}

/// Exhaustive `(|N(Ω)|, max outside collisions, max inside collisions)`
/// by explicit set construction for every left pair.
pub fn brute_expansion(tg: &TensorGraph<'_>, omega: &Support) -> (usize, usize, usize) {
    let p = tg.p();
    let all = union_without(tg, omega, None);
    let (mut outside, mut inside) = (0, 0);
    for i in 0..p {
        for ip in 0..p {
            let n = pair_neighbors(tg, (i, ip));
            if omega.contains(i, ip) {
                inside = inside.max(n.intersection(&union_without(tg, omega, Some((i, ip)))).count());
            } else {
                outside = outside.max(n.intersection(&all).count());
            }
        }
    }
    (all.len(), outside, inside)
}

/// `A X Bᵀ` by the triple sum.
pub fn brute_sketch(a: &DenseMatrix, x: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), b.rows(), |r, c| {
        let mut s = 0.0;
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                s += a[(r, i)] * x[(i, j)] * b[(c, j)];
            }
        }
        s
    })
}
