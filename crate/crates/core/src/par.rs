//! Data-parallel helpers with a sequential fallback.
//!
//! Every hot loop in the crate (per-UAV follower responses, per-UAV
//! equilibrium subgames, verification probes, harness cells) goes through
//! [`Execution::map`]. With the `parallel` feature the default strategy fans
//! out over rayon's global pool; without it everything runs on the calling
//! thread. Output order always matches input order, so results are identical
//! under both strategies.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How an indexed map is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when the crate was built with rayon, else `Sequential`.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    /// Evaluate `f(0..n)` and collect the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel => (0..n).map(f).collect(),
        }
    }

    /// Map over a slice, preserving order.
    pub fn map_slice<'a, S, T, F>(self, items: &'a [S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&'a S) -> T + Sync + Send,
    {
        self.map(items.len(), |k| f(&items[k]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_and_keep_order() {
        let seq = Execution::Sequential.map(100, |k| k * k);
        let par = Execution::Parallel.map(100, |k| k * k);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }
}
