//! Data-parallel loops whose results do not depend on the worker count.
//!
//! Reductions split the index range into fixed-size chunks, reduce each chunk
//! sequentially, then combine the partials left to right. The chunking is the
//! same whether one or many threads run it, so sums are bit-identical.

use rayon::prelude::*;

pub const CHUNK: usize = 4096;

/// `sum_{i < n} f(i)` with a fixed reduction tree.
pub fn sum<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    let chunk_sum = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    };
    let n_chunks = n.div_ceil(CHUNK);
    if n_chunks <= 1 {
        return chunk_sum(0);
    }
    let partials: Vec<f64> = (0..n_chunks).into_par_iter().map(chunk_sum).collect();
    partials.iter().sum()
}

/// `max_{i < n} f(i)`; NaN propagates.
pub fn max<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    let fold = |lo: usize, hi: usize| {
        let mut m = f64::NEG_INFINITY;
        for i in lo..hi {
            let v = f(i);
            if v.is_nan() || v > m {
                m = v;
                if v.is_nan() {
                    break;
                }
            }
        }
        m
    };
    let combine = |a: f64, b: f64| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) };
    let n_chunks = n.div_ceil(CHUNK);
    if n_chunks <= 1 {
        return fold(0, n);
    }
    (0..n_chunks)
        .into_par_iter()
        .map(|c| fold(c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, combine)
}

pub fn min<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    -max(n, |i| -f(i))
}

/// `out[i] = f(i)` for every `i`.
pub fn fill<F: Fn(usize) -> f64 + Sync>(out: &mut [f64], f: F) {
    if out.len() <= CHUNK {
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i);
        }
        return;
    }
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (i, o) in chunk.iter_mut().enumerate() {
            *o = f(base + i);
        }
    });
}

/// `out[i] = f(i, out[i])`.
pub fn update<F: Fn(usize, f64) -> f64 + Sync>(out: &mut [f64], f: F) {
    if out.len() <= CHUNK {
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i, *o);
        }
        return;
    }
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (i, o) in chunk.iter_mut().enumerate() {
            *o = f(base + i, *o);
        }
    });
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum(a.len(), |i| a[i] * b[i])
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    update(y, |i, yi| yi + alpha * x[i]);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reductions_independent_of_pool_size() {
        let n = 10 * CHUNK + 17;
        let data: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.37).sin() * 1e3).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| (sum(n, |i| data[i]), max(n, |i| data[i]), dot(&data, &data)))
        };
        let a = run(1);
        let b = run(8);
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        assert_eq!(a.2.to_bits(), b.2.to_bits());
    }

    #[test]
    fn small_and_empty_inputs() {
        assert_eq!(sum(0, |_| 1.0), 0.0);
        assert_eq!(max(0, |_| 1.0), f64::NEG_INFINITY);
        assert_eq!(sum(3, |i| i as f64), 3.0);
        assert_eq!(min(3, |i| i as f64 + 1.0), 1.0);
        assert!(max(4, |i| if i == 2 { f64::NAN } else { 0.0 }).is_nan());
        let mut v = vec![0.0; 2 * CHUNK + 3];
        fill(&mut v, |i| i as f64);
        assert_eq!(v[CHUNK + 1], (CHUNK + 1) as f64);
    }
}
