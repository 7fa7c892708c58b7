//! Seeded random substreams.
//!
//! Every replicate, stratum and fold draws from its own ChaCha stream keyed by
//! a path of integers, so results never depend on evaluation order or worker
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream tags used across the crate.
pub mod tag {
    pub const COVARIATES: u64 = 1;
    pub const ASSIGNMENT: u64 = 2;
    pub const LEARNING: u64 = 3;
    pub const CROSS_FIT: u64 = 4;
    pub const STRATUM: u64 = 5;
    pub const ORACLE: u64 = 6;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit key from a base seed and a path of tags.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |h, &t| splitmix64(h ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn substream(seed: u64, path: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(seed, path))
}
