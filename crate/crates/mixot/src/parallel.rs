//! Data-parallel primitives with a sequential fallback.
//!
//! Every hot loop in the crate routes through these helpers so that the
//! `parallel` feature flag switches the whole build between rayon and plain
//! iteration. Reductions stay deterministic: parallel regions only fill
//! disjoint slots, final sums are sequential.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fill `out[i] = f(i)` for all `i`.
#[cfg(feature = "parallel")]
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

#[cfg(not(feature = "parallel"))]
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64,
{
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Collect `f(0..n)` into a vector.
#[cfg(feature = "parallel")]
pub fn map_indexed<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64,
{
    (0..n).map(f).collect()
}
