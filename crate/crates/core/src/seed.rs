//! Seed derivation.
//!
//! Every randomized component takes an explicit `u64` seed. Child seeds are
//! derived from a parent seed and a stream index with a SplitMix64 finalizer,
//! so the value seen by a worker depends only on `(parent, index)` and never
//! on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed_k = mix64(mix64(parent) + (k + 1) * GOLDEN_GAMMA)`.
pub fn derive(parent: u64, stream: u64) -> u64 {
    mix64(mix64(parent).wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Derive along a path of stream indices.
pub fn derive_path(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |s, &k| derive(s, k))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
