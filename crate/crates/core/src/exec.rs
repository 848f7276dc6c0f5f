//! Execution strategy for the data-parallel loops.
//!
//! Every kernel in the crate funnels its row loops and its coarse task fan-out
//! through this module. With the `parallel` feature the work is handed to
//! rayon; without it (or after `set_parallel(false)`) the same closures run
//! sequentially. Work is always split by rows and every reduction is folded in
//! row order, so both paths produce bit-identical results.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

/// Row loops over fewer elements than this stay sequential; below it the
/// scheduling overhead outweighs the stencil work.
pub const PAR_MIN_ELEMS: usize = 32 * 1024;

/// Enable or disable the rayon path at runtime. No-op without the
/// `parallel` feature.
pub fn set_parallel(on: bool) {
    PARALLEL.store(on && cfg!(feature = "parallel"), Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

#[inline]
fn go_parallel(len: usize) -> bool {
    parallel_enabled() && len >= PAR_MIN_ELEMS
}

/// Calls `f(row_index, row)` for every `width`-long row of `data`.
pub fn rows_mut<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(width > 0 && data.len().is_multiple_of(width));
    #[cfg(feature = "parallel")]
    if go_parallel(data.len()) {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(j, row)| f(j, row));
        return;
    }
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(j, row)| f(j, row));
}

/// Like [`rows_mut`] but hands each worker a scratch buffer created by `init`.
pub fn rows_mut_with<S, I, F>(data: &mut [f64], width: usize, init: I, f: F)
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(width > 0 && data.len().is_multiple_of(width));
    #[cfg(feature = "parallel")]
    if go_parallel(data.len()) {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each_init(&init, |s, (j, row)| f(s, j, row));
        return;
    }
    let mut s = init();
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(j, row)| f(&mut s, j, row));
}

/// Sum of `f(row)` over all rows, folded in row order.
pub fn row_sum<F>(data: &[f64], width: usize, f: F) -> f64
where
    F: Fn(usize, &[f64]) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(data.len()) {
        let partial: Vec<f64> = data
            .par_chunks(width)
            .enumerate()
            .map(|(j, row)| f(j, row))
            .collect();
        return partial.iter().sum();
    }
    data.chunks(width)
        .enumerate()
        .map(|(j, row)| f(j, row))
        .sum()
}

/// Maps independent coarse tasks (scenarios, probe trials, quadrature
/// samples). Output order matches input order.
pub fn map_tasks<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() && items.len() > 1 {
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}
