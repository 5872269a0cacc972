//! Deterministic data-parallel helpers.
//!
//! Reductions are split into fixed-size index chunks; per-chunk partial
//! results are combined sequentially in chunk order. Because each partial is
//! itself accumulated in index order, the final result is bit-identical for
//! any thread count and equal to the sequential fallback built without the
//! `parallel` feature.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk size for partial reductions over sample rows.
pub(crate) const ROW_CHUNK: usize = 256;

/// Apply `f` to each chunk `[start, end)` of `0..n`, returning partials in
/// chunk order.
pub(crate) fn map_chunks<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync,
{
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let run = |&s: &usize| f(s..(s + chunk).min(n));
    #[cfg(feature = "parallel")]
    {
        starts.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        starts.iter().map(run).collect()
    }
}

/// Order-preserving map over `0..n`.
pub(crate) fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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
