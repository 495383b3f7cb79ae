//! Seed derivation. Every stochastic step takes an explicit `u64` seed so that
//! serial and parallel runs see the same streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-item seed: `seed ⊕ index`.
#[inline]
pub fn item_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Mixes a tag into a seed so independent streams (epochs, folds, views) do not
/// share prefixes.
pub fn derive(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
