//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper partitions work by a fixed rule that does not depend on the
//! number of worker threads, so results are bitwise identical with or without
//! the `parallel` feature and for any pool size.

use num_complex::Complex64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed block length for reductions.
const SUM_BLOCK: usize = 1 << 14;

/// Apply `f(chunk_index, chunk)` to consecutive chunks of `chunk` elements.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Map every element of `items` in order.
pub(crate) fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    items.iter().map(f).collect()
}

/// Fill `out[i] = f(i)`.
pub(crate) fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    for_each_chunk_mut(out, SUM_BLOCK, |b, c| {
        let base = b * SUM_BLOCK;
        for (k, v) in c.iter_mut().enumerate() {
            *v = f(base + k);
        }
    });
}

/// Sum `f(i)` for `i in 0..n` in fixed blocks, combined in block order.
pub(crate) fn sum_complex<F>(n: usize, f: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync + Send,
{
    let blocks = n.div_ceil(SUM_BLOCK);
    let block_sum = |b: usize| {
        let lo = b * SUM_BLOCK;
        let hi = (lo + SUM_BLOCK).min(n);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in lo..hi {
            acc += f(i);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Complex64> = (0..blocks).into_par_iter().map(block_sum).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Complex64> = (0..blocks).map(block_sum).collect();
    partials.into_iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b)
}

/// Real-valued counterpart of [`sum_complex`].
pub(crate) fn sum_real<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    sum_complex(n, |i| Complex64::new(f(i), 0.0)).re
}
