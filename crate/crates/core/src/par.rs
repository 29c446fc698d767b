//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the rayon pool; without it every helper runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum items per rayon task; smaller inputs are not worth splitting.
pub const MIN_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// `(0..n).map(f)` collected in index order.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel if n >= MIN_CHUNK => (0..n).into_par_iter().with_min_len(MIN_CHUNK).map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// `(0..n).filter_map(f)` collected in index order.
pub fn filter_map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> Option<T> + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel if n >= MIN_CHUNK => (0..n)
            .into_par_iter()
            .with_min_len(MIN_CHUNK)
            .filter_map(f)
            .collect(),
        _ => (0..n).filter_map(f).collect(),
    }
}

/// Concatenation of `f(i)` for `i in 0..n`, in index order.
pub fn flat_map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> Vec<T> + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel if n > 1 => (0..n).into_par_iter().flat_map_iter(f).collect(),
        _ => (0..n).flat_map(f).collect(),
    }
}
