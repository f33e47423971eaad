//! Counter-based noise streams.
//!
//! Every Gaussian draw in a run is addressed by a [`NoiseKey`] rather than by
//! its position in a sequential stream, so the values a window sees do not
//! depend on the order (or thread) in which windows are evaluated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a draw is used for. Distinct purposes never share values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Stochastic = 2,
    Padding = 3,
    Guidance = 4,
    Stabilize = 5,
    Scene = 6,
    Perturb = 7,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub purpose: Purpose,
    pub step: u64,
    pub index: u64,
    pub sub: u64,
}

impl NoiseKey {
    pub fn new(purpose: Purpose, step: usize, index: i64) -> Self {
        Self {
            purpose,
            step: step as u64,
            index: index as u64,
            sub: 0,
        }
    }

    pub fn with_sub(mut self, sub: usize) -> Self {
        self.sub = sub as u64;
        self
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seeded family of keyed Gaussian streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, key: NoiseKey) -> ChaCha8Rng {
        let mut h = splitmix64(self.seed);
        for word in [key.purpose as u64, key.step, key.index, key.sub] {
            h = splitmix64(h ^ word);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        rng.set_stream(key.purpose as u64);
        rng
    }

    /// `n` independent standard normals for `key`.
    pub fn normals(&self, key: NoiseKey, n: usize) -> Vec<f64> {
        let mut rng = self.rng(key);
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }
}
