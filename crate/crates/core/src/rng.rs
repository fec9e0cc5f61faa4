//! Seed derivation. Every random stream in a campaign is a ChaCha8 stream
//! keyed by a seed derived from the master seed, so results do not depend on
//! scheduling or on which other engines are enabled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed of `parent` for the given `salt`.
pub fn derive_seed(parent: u64, salt: u64) -> u64 {
    splitmix64(parent ^ splitmix64(salt))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
