//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed and builds a ChaCha8 stream
//! from it. Sub-streams (replicates, cells, intervals) derive their seeds
//! through [`derive_seed`], so any subset of a run can be reproduced alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for replicate `replicate` at sample size `n` under base seed `base`:
/// `splitmix64(splitmix64(base ^ splitmix64(n)) ^ replicate)`.
pub fn derive_seed(base: u64, n: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(n)) ^ replicate)
}
