//! Seedable randomness shared by the engine, the transitions and the targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

/// Source of the three draws a sampler needs.
///
/// Implementations must be deterministic given their seed: two sources built
/// from the same seed produce bitwise-identical streams.
pub trait RandomSource {
    /// Draw from U(0, 1), half-open `[0, 1)`.
    fn uniform(&mut self) -> f64;

    /// Draw from N(0, 1).
    fn std_normal(&mut self) -> f64;

    /// Draw from Exp(rate). `rate` must be positive and finite.
    fn exponential(&mut self, rate: f64) -> f64;

    /// Uniform index in `0..n`. `n` must be nonzero.
    fn index(&mut self, n: usize) -> usize;

    /// Fill `out` with iid N(0, 1) draws.
    fn fill_std_normal(&mut self, out: &mut [f64]) {
        for slot in out {
            *slot = self.std_normal();
        }
    }
}

/// ChaCha8-backed [`RandomSource`]; the stream is stable across platforms and
/// releases of this crate.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent child stream, e.g. one per chain or one for minibatching.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }
}

impl RandomSource for SeededRng {
    fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    fn std_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    fn exponential(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0 && rate.is_finite());
        let e: f64 = self.inner.sample(Exp1);
        e / rate
    }

    fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}
