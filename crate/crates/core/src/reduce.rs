//! Deterministic parallel reduction.
//!
//! Work is split into fixed chunks of item indices; each chunk is reduced
//! sequentially, chunk partials are combined pairwise in chunk order. The
//! result is bit-identical for any thread count because neither the chunk
//! boundaries nor the combination order depend on scheduling.

use rayon::prelude::*;

pub const DEFAULT_CHUNK: usize = 1024;

/// Sums `accumulate(i, &mut partial)` over `i in 0..count` deterministically.
pub fn deterministic_sum<T, Z, A, C>(count: usize, chunk: usize, zero: Z, accumulate: A, combine: C) -> T
where
    T: Send,
    Z: Fn() -> T + Sync,
    A: Fn(usize, &mut T) + Sync,
    C: Fn(T, T) -> T,
{
    assert!(chunk > 0);
    if count == 0 {
        return zero();
    }
    let ranges: Vec<(usize, usize)> = (0..count)
        .step_by(chunk)
        .map(|lo| (lo, (lo + chunk).min(count)))
        .collect();
    let partials: Vec<T> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = zero();
            for i in lo..hi {
                accumulate(i, &mut acc);
            }
            acc
        })
        .collect();
    pairwise_combine(partials, &combine)
}

/// Combines an index-ordered list pairwise: ((p0+p1)+(p2+p3))+... .
pub fn pairwise_combine<T, C>(mut parts: Vec<T>, combine: &C) -> T
where
    C: Fn(T, T) -> T,
{
    assert!(!parts.is_empty());
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.drain(..);
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        drop(it);
        parts = next;
    }
    parts.pop().unwrap()
}
