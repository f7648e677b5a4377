//! Named random streams derived from a single master seed.
//!
//! Every consumer of randomness (scenario generation, planner sampling, the
//! RRT* baseline, cloud jitter) draws from its own stream so that adding a
//! consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

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

    /// Child stream keyed by `name`. Stable across platforms and releases.
    pub fn derive(&self, name: &str) -> SeedStream {
        // FNV-1a over the name, folded into the parent seed with splitmix64.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        SeedStream {
            seed: splitmix64(self.seed ^ splitmix64(h)),
        }
    }

    pub fn derive_index(&self, name: &str, index: u64) -> SeedStream {
        let child = self.derive(name);
        SeedStream {
            seed: splitmix64(child.seed.wrapping_add(splitmix64(index))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
