//! Seeding.
//!
//! Every random stream is a `ChaCha8Rng` seeded from a 64-bit value. Derived
//! streams (per trial, per instance) take their seed from [`derive_seed`],
//! a SplitMix64-based mix of the parent seed and the stream coordinates, so a
//! single trial can be replayed in isolation and results do not depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags keep unrelated derived seeds apart.
pub mod tag {
    pub const INSTANCE: u64 = 0x696e_7374;
    pub const SAMPLES: u64 = 0x7361_6d70;
    pub const INIT: u64 = 0x696e_6974;
    pub const LAMBDA: u64 = 0x6c61_6d62;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of `(seed, parts...)`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
