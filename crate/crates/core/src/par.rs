//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the current
//! rayon pool; without it the same closures run on the calling thread.
//! Results always come back in index order and reductions are folded
//! sequentially over fixed-size blocks, so the floating-point outcome does
//! not depend on the number of worker threads or on which path is compiled.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, returning results in index order.
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

/// Split `0..len` into consecutive blocks of `block` items and map `f` over
/// each block. Block boundaries depend only on `len` and `block`.
pub fn map_blocks<T, F>(len: usize, block: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let block = block.max(1);
    let n_blocks = len.div_ceil(block);
    map_indexed(n_blocks, |k| {
        let start = k * block;
        f(start..(start + block).min(len))
    })
}

/// Fixed-order sum of per-block partial sums.
pub fn block_sum<F>(len: usize, block: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    map_blocks(len, block, f).into_iter().sum()
}

/// Fixed-order sum of per-block partial vectors of length `dim`.
pub fn block_sum_vec<F>(len: usize, block: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>) -> Vec<f64> + Sync + Send,
{
    map_blocks(len, block, f)
        .into_iter()
        .fold(vec![0.0; dim], |mut acc, part| {
            for (a, v) in acc.iter_mut().zip(part) {
                *a += v;
            }
            acc
        })
}

/// Whether the crate was compiled with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
