use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A named, reproducible random source. Sub-streams are derived from the
/// parent seed and an index so per-sample work does not depend on the order
/// in which samples are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeededStream {
    seed: u64,
}

impl SeededStream {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for `index`. The xor is passed through a splitmix64
    /// finalizer so nested splits (sample, then step) cannot collide.
    pub fn split(&self, index: u64) -> SeededStream {
        SeededStream {
            seed: splitmix64(self.seed ^ index),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
