//! Streaming mean/variance accumulation and order-fixed parallel reduction.
//!
//! Monte Carlo aggregation is a commutative-monoid merge of
//! `(count, mean, M2)` triples. To make results independent of the worker
//! count, paths are grouped into fixed-size blocks by path index; blocks are
//! reduced internally in path order and block results are folded left to
//! right. Only the assignment of blocks to threads varies with the pool size,
//! never the arithmetic.

use rayon::prelude::*;

/// Welford accumulator for numerically stable streaming statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        let delta2 = x - self.mean;
        self.m2 += delta * delta2;
    }

    /// Merge two accumulators (parallel reduction step).
    pub fn merge(a: Welford, b: Welford) -> Welford {
        if a.count == 0 {
            return b;
        }
        if b.count == 0 {
            return a;
        }
        let count = a.count + b.count;
        let delta = b.mean - a.mean;
        let mean = a.mean + delta * (b.count as f64 / count as f64);
        let m2 = a.m2 + b.m2 + delta * delta * (a.count as f64 * b.count as f64 / count as f64);
        Welford { count, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sample_variance() / self.count as f64).sqrt()
        }
    }

    /// 95% normal confidence-interval half width for the mean.
    pub fn ci_half_width(&self) -> f64 {
        1.96 * self.standard_error()
    }
}

/// Paths per reduction block. A constant, so the reduction tree depends only
/// on the path count.
pub const REDUCTION_BLOCK: u64 = 256;

/// Runs `work` over path indices `0..count` in fixed blocks and folds the
/// per-block states in block order.
///
/// `work` fills a fresh accumulator with the paths of one block (in
/// ascending path order); `merge` combines block states left to right.
/// The result is a pure function of `(count, work, merge)` — the rayon pool
/// size only changes scheduling.
pub fn reduce_paths<A, E, W, M>(count: u64, work: W, merge: M) -> Result<A, E>
where
    A: Send + Default,
    E: Send,
    W: Fn(std::ops::Range<u64>) -> Result<A, E> + Sync,
    M: Fn(A, A) -> A,
{
    let blocks: Vec<std::ops::Range<u64>> = (0..count)
        .step_by(REDUCTION_BLOCK as usize)
        .map(|lo| lo..(lo + REDUCTION_BLOCK).min(count))
        .collect();
    let partials: Vec<Result<A, E>> = blocks.into_par_iter().map(&work).collect();
    let mut acc = A::default();
    for partial in partials {
        acc = merge(acc, partial?);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matches_two_pass_formulas() {
        let xs = [1.0, 4.0, 9.0, 16.0, 25.0];
        let mut w = Welford::new();
        for &x in &xs {
            w.push(x);
        }
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 =
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((w.mean() - mean).abs() < 1e-12);
        assert!((w.sample_variance() - var).abs() < 1e-12);
    }

    #[test]
    fn empty_and_singleton() {
        let w = Welford::new();
        assert_eq!(w.count(), 0);
        assert_eq!(w.sample_variance(), 0.0);
        assert_eq!(w.standard_error(), 0.0);
        let mut s = Welford::new();
        s.push(3.5);
        assert_eq!(s.mean(), 3.5);
        assert_eq!(s.sample_variance(), 0.0);
    }

    #[test]
    fn reduce_paths_is_pool_independent() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                reduce_paths::<Welford, (), _, _>(
                    10_000,
                    |range| {
                        let mut acc = Welford::new();
                        for p in range {
                            acc.push((p as f64).sin());
                        }
                        Ok(acc)
                    },
                    Welford::merge,
                )
                .unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        let c = run(8);
        assert_eq!(a.mean().to_bits(), b.mean().to_bits());
        assert_eq!(b.mean().to_bits(), c.mean().to_bits());
        assert_eq!(a.sample_variance().to_bits(), c.sample_variance().to_bits());
    }

    proptest! {
        #[test]
        fn merge_agrees_with_sequential(xs in proptest::collection::vec(-1e3f64..1e3, 1..200), split in 0usize..200) {
            let split = split.min(xs.len());
            let mut left = Welford::new();
            for &x in &xs[..split] { left.push(x); }
            let mut right = Welford::new();
            for &x in &xs[split..] { right.push(x); }
            let merged = Welford::merge(left, right);

            let mut seq = Welford::new();
            for &x in &xs { seq.push(x); }

            prop_assert_eq!(merged.count(), seq.count());
            prop_assert!((merged.mean() - seq.mean()).abs() <= 1e-9 * (1.0 + seq.mean().abs()));
            prop_assert!((merged.sample_variance() - seq.sample_variance()).abs()
                <= 1e-7 * (1.0 + seq.sample_variance().abs()));
        }
    }
}
