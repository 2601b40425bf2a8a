//! Seeding helpers.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` seeded with a
//! `u64`. ChaCha8 is a portable, platform-independent stream cipher generator,
//! so a seed reproduces the same numbers on every target.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One step of the SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of indices:
/// `s = splitmix64(base)`, then `s = splitmix64(s ^ index)` for each index.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |s, &i| splitmix64(s ^ i))
}
