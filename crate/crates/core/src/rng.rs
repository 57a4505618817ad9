//! Seeded randomness. Every random draw in the crate goes through [`Stream`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

/// Deterministic generator of uniform and standard-normal reals.
///
/// Sub-streams are derived with [`Stream::fork`] from a label; forking does
/// not advance the parent, so the order in which children are created does
/// not matter.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    rng: ChaCha8Rng,
}

const ROOT: u64 = 0x6a09_e667_f3bc_c908;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl Stream {
    pub fn new(seed: Seed) -> Self {
        Self::from_key(mix(ROOT, seed.0))
    }

    fn from_key(key: u64) -> Self {
        Self {
            key,
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    pub fn fork(&self, label: &str) -> Stream {
        Self::from_key(mix(self.key, fnv1a(label)))
    }

    pub fn fork_indexed(&self, label: &str, index: u64) -> Stream {
        Self::from_key(mix(mix(self.key, fnv1a(label)), index))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}
