//! Seed derivation and per-episode random streams.
//!
//! Every episode draws from independent named streams so that two methods
//! evaluated on the same scenario seed see the same event and noise
//! sequences, up to divergence caused by their own actions.

use rand::rand_core::{impls, RngCore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer of `a` combined with `b`.
pub fn mix64(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and a path of tags.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(root, 0xA5A5_A5A5), |s, &t| mix64(s, t))
}

/// Hashes a string tag into a `u64` for use in [`derive_seed`] paths.
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

/// Small counter-based generator.
#[derive(Clone, Debug)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }
}

impl RngCore for SplitMix64 {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.0, 0)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}

/// Named random streams for one episode.
#[derive(Clone, Debug)]
pub struct EpisodeRng {
    pub events: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub latency: ChaCha8Rng,
    outcome_seed: u64,
}

impl EpisodeRng {
    pub fn new(seed: u64) -> Self {
        Self {
            events: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag("events")])),
            noise: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag("noise")])),
            latency: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag("latency")])),
            outcome_seed: derive_seed(seed, &[tag("outcomes")]),
        }
    }

    /// Generator for the classification outcome of `task`, independent of
    /// when or by whom the task is classified.
    pub fn outcome(&self, task: usize) -> SplitMix64 {
        SplitMix64::new(mix64(self.outcome_seed, task as u64))
    }
}
