//! Recovery of distributed-sparse matrices from tensor-product sketches
//! `Y = A X Bᵀ`, where `A` and `B` are adjacency matrices of random
//! δ-left-regular bipartite graphs, together with empirical checkers for the
//! expansion, l1-isometry and nullspace properties that make l1 recovery work.

pub mod ensemble;
pub mod error;
pub mod exec;
pub mod harness;
pub mod matrix;
pub mod operator;
pub mod pipelines;
pub mod seed;
pub mod solver;
pub mod verify;

pub use ensemble::{BipartiteGraph, Support, TensorGraph, ValueSpec};
pub use error::{Error, Result};
pub use exec::Exec;
pub use matrix::DenseMatrix;
pub use operator::SketchOperator;
pub use solver::{RecoveryResult, SolverOptions};
