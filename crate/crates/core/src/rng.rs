//! Seed handling.
//!
//! Every random draw in the crate goes through a [`ChaCha8Rng`] built from a
//! 64-bit seed. Child streams are derived with a counter-based mix so that
//! replicate `k` of a Monte Carlo loop gets the same seed no matter which
//! thread runs it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `stream` of `parent`.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(stream.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams used across modules, so that two call sites never
/// accidentally share randomness.
pub(crate) mod stream {
    pub const MEDIAN: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const FREQS: u64 = 4;
    pub const FREQS_SECOND: u64 = 5;
    pub const NOISE: u64 = 6;
    pub const PERMUTATION: u64 = 7;
    pub const FOLDS: u64 = 8;
    pub const DATA: u64 = 9;
    pub const PARTICLES: u64 = 10;
    pub const EPOCH: u64 = 11;
}
