//! Order-fixed parallel reductions.
//!
//! Work is cut into fixed-size blocks of replicate ids. Blocks run on the
//! rayon pool in any order, but results are combined in block order, so the
//! floating-point result does not depend on the number of workers.

use rayon::prelude::*;

pub const BLOCK: usize = 1024;

/// Evaluate `f` for every id in `0..count` and return the results in id order.
pub fn map_ordered<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).into_par_iter().with_min_len(64).map(&f).collect()
}

/// Sum `f(id)` over `0..count` with a fixed association order.
pub fn sum_ordered<F>(count: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let blocks = count.div_ceil(BLOCK);
    let partial: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(count);
            (start..end).map(&f).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}
