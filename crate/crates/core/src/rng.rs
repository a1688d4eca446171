//! Seeded, reproducible random number generation.
//!
//! All randomness in the crate flows through a counter-based generator seeded
//! from a `u64`, so every scenario is exactly reproducible from its config.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed for a named stream of a base seed
/// (splitmix64 step), so one config seed can drive several generators.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
