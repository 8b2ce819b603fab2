//! Execution strategy for data-parallel inner loops.
//!
//! Every parallel site in the crate maps a pure closure over an index range
//! and collects results in ascending index order, so outputs are bitwise
//! identical across thread counts and identical to the sequential fallback
//! built with `--no-default-features`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
///
/// Runs on the current rayon pool when the `parallel` feature is enabled,
/// sequentially otherwise.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential counterpart of [`map_indexed`], always single-threaded.
///
/// Kept public so benchmarks can compare both strategies in one build.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let par = map_indexed(257, |i| i * i);
        let seq = map_indexed_seq(257, |i| i * i);
        assert_eq!(par, seq);
    }
}
