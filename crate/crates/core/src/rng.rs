//! Seed derivation.
//!
//! Every random draw in an experiment descends from one 64-bit seed. Each
//! subsystem asks for its own stream by name; the stream seed is
//! `splitmix64(seed ^ fnv1a64(name))`, which feeds a ChaCha8 generator. Both
//! mixers are fixed, portable integer arithmetic, so runs replay bit for bit
//! on any platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// One step of the SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the named sub-stream.
    pub fn derive(&self, name: &str) -> u64 {
        splitmix64(self.seed ^ fnv1a64(name))
    }

    /// Sub-stream for a numbered trial of a named subsystem.
    pub fn derive_indexed(&self, name: &str, index: u64) -> u64 {
        splitmix64(self.derive(name) ^ splitmix64(index))
    }

    pub fn rng(&self, name: &str) -> StreamRng {
        StreamRng::seed_from_u64(self.derive(name))
    }

    pub fn rng_indexed(&self, name: &str, index: u64) -> StreamRng {
        StreamRng::seed_from_u64(self.derive_indexed(name, index))
    }
}
