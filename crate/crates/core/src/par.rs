//! Execution helpers shared by the numeric kernels.
//!
//! With the `parallel` feature (default) the `map_*` functions fan out over
//! rayon; without it they run sequentially. Reductions never depend on thread
//! scheduling: per-item (or per-chunk) results are collected in input order
//! and combined by the same deterministic pairwise sum in both builds, so
//! parallel and sequential outputs are bitwise identical. Thread count follows
//! rayon's `RAYON_NUM_THREADS`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for per-chunk partial reductions.
pub(crate) const CHUNK: usize = 256;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
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

/// Map `f` over fixed-size chunks of `0..n` (each chunk a half-open range),
/// collecting per-chunk results in chunk order. Chunk boundaries are a pure
/// function of `n`, so results do not depend on the thread count.
pub(crate) fn map_chunks<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let ranges: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(n))
        .collect();
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Pairwise (cascade) summation. Deterministic for a given slice regardless
/// of how the slice was produced, and more accurate than left-to-right
/// accumulation on long inputs.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
