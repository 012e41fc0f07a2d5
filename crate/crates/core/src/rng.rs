//! Seeded randomness shared by every stochastic routine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type HarnessRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> HarnessRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed (splitmix64 finalizer over seed and stream).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
