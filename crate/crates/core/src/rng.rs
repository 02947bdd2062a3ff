//! Named, independently seeded random streams.
//!
//! Each robot and noise source owns one stream. The stream's seed is derived
//! from the run seed and the stream name with FNV-1a, and the generator is
//! ChaCha8, so sample sequences are identical across runs and platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone)]
pub struct RngStream {
    name: String,
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64, name: &str) -> Self {
        let key = fnv1a(seed.to_le_bytes().into_iter().chain(name.bytes()));
        Self { name: name.to_owned(), rng: ChaCha8Rng::seed_from_u64(key), draws: 0 }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of samples drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Zero-mean Gaussian sample. A standard normal is always drawn, so the
    /// stream advances identically whatever `sigma` is.
    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        self.draws += 1;
        let z: f64 = self.rng.sample(StandardNormal);
        z * sigma
    }

    /// Uniform sample in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.draws += 1;
        lo + (hi - lo) * self.rng.random::<f64>()
    }
}
