//! Row-parallel helpers. Each output row is written by exactly one closure
//! call, so the serial and rayon paths produce identical bits.

/// Calls `f(i, row)` for every `width`-sized chunk of `data`.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_row<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    data.par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_row<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}
