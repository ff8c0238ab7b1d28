//! Data-parallel building blocks with sequential fallbacks.
//!
//! With the `parallel` feature (the default) the dispatching functions run on
//! the rayon thread pool; without it they fall back to the `_seq` variants.
//! Both variants use the same fixed chunking, so results are bitwise
//! identical regardless of the feature or the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for dot products; fixed so the summation order never changes.
pub const DOT_CHUNK: usize = 1024;

fn chunk_dot(w: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in w.iter().zip(v) {
        acc += a * b;
    }
    acc
}

/// Dot product with fixed-size chunked accumulation.
pub fn dot_seq(w: &[f64], v: &[f64]) -> f64 {
    assert_eq!(w.len(), v.len());
    w.chunks(DOT_CHUNK)
        .zip(v.chunks(DOT_CHUNK))
        .map(|(cw, cv)| chunk_dot(cw, cv))
        .sum()
}

#[cfg(feature = "parallel")]
pub fn dot_par(w: &[f64], v: &[f64]) -> f64 {
    assert_eq!(w.len(), v.len());
    let partials: Vec<f64> = w
        .par_chunks(DOT_CHUNK)
        .zip(v.par_chunks(DOT_CHUNK))
        .map(|(cw, cv)| chunk_dot(cw, cv))
        .collect();
    partials.iter().sum()
}

/// Dot product; parallel only for very long histories, where the memory
/// traffic finally outweighs the fork-join overhead.
pub fn dot(w: &[f64], v: &[f64]) -> f64 {
    #[cfg(feature = "parallel")]
    {
        if w.len() >= 1 << 20 {
            return dot_par(w, v);
        }
    }
    dot_seq(w, v)
}

/// Map `f` over `xs` into a fresh vector.
pub fn map_grid_seq<F: Fn(f64) -> f64 + Sync>(xs: &[f64], f: F) -> Vec<f64> {
    xs.iter().map(|&x| f(x)).collect()
}

#[cfg(feature = "parallel")]
pub fn map_grid_par<F: Fn(f64) -> f64 + Sync>(xs: &[f64], f: F) -> Vec<f64> {
    xs.par_iter().map(|&x| f(x)).collect()
}

pub fn map_grid<F: Fn(f64) -> f64 + Sync>(xs: &[f64], f: F) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        if xs.len() >= 8192 {
            return map_grid_par(xs, f);
        }
    }
    map_grid_seq(xs, f)
}

/// Apply `f` to equally sized mutable chunks, indexed by chunk number.
/// Each chunk is written by exactly one task.
pub fn for_chunks_mut_seq<F: Fn(usize, &mut [f64]) + Sync>(data: &mut [f64], chunk: usize, f: F) {
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

#[cfg(feature = "parallel")]
pub fn for_chunks_mut_par<F: Fn(usize, &mut [f64]) + Sync>(data: &mut [f64], chunk: usize, f: F) {
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

pub fn for_chunks_mut<F: Fn(usize, &mut [f64]) + Sync>(data: &mut [f64], chunk: usize, f: F) {
    #[cfg(feature = "parallel")]
    {
        // per-chunk work must dwarf the tasking overhead to pay off
        if chunk >= 1024 && data.len() >= (1 << 20) {
            return for_chunks_mut_par(data, chunk, f);
        }
    }
    for_chunks_mut_seq(data, chunk, f);
}
