//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper collects results in input order and performs any floating-point
//! reduction sequentially afterwards, so parallel and sequential execution are
//! bit-identical. With the `parallel` feature disabled, [`Exec::Parallel`]
//! silently degrades to sequential execution.

use serde::{Deserialize, Serialize};

/// Execution strategy for batch work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// True when work will actually be spread over a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fixed chunk length used by [`sum_vectors`]; independent of the thread count.
pub const CHUNK: usize = 64;

/// Sums `f(i)` (each a vector of length `len`) over `0..n`.
///
/// Partial sums are formed over fixed-size chunks and then added in chunk
/// order, which keeps the result independent of scheduling.
pub fn sum_vectors<F>(exec: Exec, n: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partials = map_range(exec, chunks, |c| {
        let mut acc = vec![0.0; len];
        let end = ((c + 1) * CHUNK).min(n);
        for i in c * CHUNK..end {
            f(i, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_sums_are_bit_identical() {
        let f = |i: usize, acc: &mut [f64]| {
            let x = (i as f64 * 0.731).sin();
            acc[0] += x;
            acc[1] += x * x * 1e-3;
        };
        let a = sum_vectors(Exec::Sequential, 10_007, 2, f);
        let b = sum_vectors(Exec::Parallel, 10_007, 2, f);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn map_preserves_order() {
        let v: Vec<usize> = (0..1000).collect();
        assert_eq!(map(Exec::Parallel, &v, |x| x * 2), map(Exec::Sequential, &v, |x| x * 2));
        assert_eq!(map_range(Exec::Parallel, 5, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
