//! Seeded random streams.
//!
//! Every stochastic component draws from its own stream, derived from a root
//! seed by a label (and optionally an index), so that changing how many draws
//! one component makes never shifts another component's numbers.

use rand::{seq::SliceRandom, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for a labeled purpose. Depends only on the root
    /// seed and the label, never on how much of this stream was consumed.
    pub fn derive(&self, label: &str) -> RngState {
        RngState::new(splitmix64(self.seed ^ splitmix64(fnv1a(label.as_bytes()))))
    }

    /// Independent stream for the `index`-th instance of a labeled purpose.
    pub fn derive_indexed(&self, label: &str, index: u64) -> RngState {
        let base = self.derive(label).seed;
        RngState::new(splitmix64(base ^ splitmix64(index.wrapping_add(1))))
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| lo + (hi - lo) * self.uniform()).collect()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    /// `n` i.i.d. draws from N(mean, sd²).
    pub fn sample_gaussian(&mut self, n: usize, mean: f64, sd: f64) -> Result<Vec<f64>> {
        if !(sd >= 0.0) || !sd.is_finite() || !mean.is_finite() {
            return Err(Error::invalid(format!(
                "gaussian needs finite mean and sd >= 0, got mean {mean}, sd {sd}"
            )));
        }
        if sd == 0.0 {
            return Ok(vec![mean; n]);
        }
        Ok((0..n).map(|_| mean + sd * self.standard_normal()).collect())
    }

    /// `n` independent 0/1 values, each 1 with probability `keep_prob`.
    pub fn sample_bernoulli_mask(&mut self, n: usize, keep_prob: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&keep_prob) {
            return Err(Error::invalid(format!(
                "keep probability must lie in [0, 1], got {keep_prob}"
            )));
        }
        // uniform() is in [0, 1), so keep_prob 1 keeps all and 0 keeps none.
        Ok((0..n)
            .map(|_| if self.uniform() < keep_prob { 1.0 } else { 0.0 })
            .collect())
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Free-function form of [`RngState::sample_gaussian`].
pub fn sample_gaussian(rng: &mut RngState, n: usize, mean: f64, sd: f64) -> Result<Vec<f64>> {
    rng.sample_gaussian(n, mean, sd)
}

/// Free-function form of [`RngState::sample_bernoulli_mask`].
pub fn sample_bernoulli_mask(rng: &mut RngState, n: usize, keep_prob: f64) -> Result<Vec<f64>> {
    rng.sample_bernoulli_mask(n, keep_prob)
}
