//! Data-parallel map helpers.
//!
//! Record-level work in this crate (augmentation, perturbation, scoring)
//! is embarrassingly parallel: each element is a pure function of its
//! input and its own seeded generator. `map` runs on a rayon pool when
//! the `parallel` feature is enabled and degrades to the sequential path
//! otherwise. Output order always matches input order, so results are
//! identical regardless of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sequential map, available under every feature combination. The bench
/// suite uses this as the baseline against the parallel path.
pub fn map_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Parallel map over a slice when `parallel` is enabled, sequential
/// otherwise.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    map_seq(items, f)
}

/// Indexed variant of [`map`].
#[cfg(feature = "parallel")]
pub fn map_indexed<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}
