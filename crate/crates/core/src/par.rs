//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the [`Execution::Parallel`] policy
//! runs on the rayon global pool; without it every policy runs sequentially.
//! All helpers return results in input order, so outputs never depend on the
//! policy or the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work in parallel.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    #[cfg(feature = "parallel")]
    #[inline]
    fn is_parallel(self) -> bool {
        Self::parallel_available() && self == Execution::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = exec;
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = exec;
    (0..n).map(f).collect()
}

/// Calls `f(index, chunk)` on consecutive `chunk_len`-sized chunks.
pub fn for_each_chunk_mut<T, F>(exec: Execution, data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = exec;
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Counts indices in `0..n` satisfying `pred`.
pub fn count<F>(exec: Execution, n: usize, pred: F) -> usize
where
    F: Fn(usize) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().filter(|&i| pred(i)).count();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = exec;
    (0..n).filter(|&i| pred(i)).count()
}
