//! Sequential / data-parallel dispatch for batch workloads.
//!
//! Monte-Carlo trials, grid cells and verifier batches are independent, so
//! every batch entry point takes an [`Exec`] and maps a pure closure over an
//! index range. Without the `parallel` feature the parallel variant runs
//! sequentially; results are identical either way because each work item
//! derives its own seed.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Map `f` over `0..n`, preserving index order in the output.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => par_map(n, f),
        }
    }

    /// Map over a slice of items, preserving order.
    pub fn map_items<I, T, F>(self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        self.map(items.len(), |k| f(&items[k]))
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Size the global worker pool. `SKETCH_THREADS` wins over `requested`.
/// Returns the thread count actually configured, or `None` when the pool
/// was already initialised or the crate was built without `parallel`.
pub fn init_threads(requested: Option<usize>) -> Option<usize> {
    let from_env = std::env::var("SKETCH_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    let n = from_env.or(requested)?;
    init_pool(n)
}

#[cfg(feature = "parallel")]
fn init_pool(n: usize) -> Option<usize> {
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok().map(|_| n)
}

#[cfg(not(feature = "parallel"))]
fn init_pool(_n: usize) -> Option<usize> {
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_keep_order() {
        let f = |k: usize| (k * k) as u64 ^ 0x5a;
        let a = Exec::Sequential.map(257, f);
        let b = Exec::Parallel.map(257, f);
        assert_eq!(a, b);
        assert_eq!(a[3], 9 ^ 0x5a);
    }
}
