use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::Vector;

/// Seeded random source.
///
/// Backed by ChaCha8 (`rand_chacha`), a counter-based stream cipher whose
/// output is fully specified and platform independent: equal seeds and equal
/// call sequences give bit-identical streams everywhere.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer), so that
/// per-sample generators are independent and reproducible.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// I.i.d. `N(0, sigma²)` vector. `sigma == 0` returns exact zeros without
/// consuming the stream.
pub fn gaussian_vector(rng: &mut Rng, len: usize, sigma: f64) -> Result<Vector> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(Vector::zeros(len));
    }
    Ok((0..len).map(|_| sigma * rng.normal()).collect())
}
