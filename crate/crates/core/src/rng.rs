//! Seed handling shared by every stochastic routine.
//!
//! A single 64-bit seed is expanded into independent streams by mixing a
//! domain tag into it, so that two stages of a pipeline never share random
//! draws and reseeding one stage leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    /// Child seed for the stream named `tag`.
    pub fn derive(self, tag: &str) -> Self {
        // FNV-1a over the tag, then a splitmix64 finalizer over the pair.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in tag.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Self(splitmix64(self.0 ^ splitmix64(h)))
    }

    /// Child seed for the `index`-th member of a family (frames, trials, steps).
    pub fn derive_index(self, tag: &str, index: u64) -> Self {
        let base = self.derive(tag);
        Self(splitmix64(base.0.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))))
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        Self(seed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
