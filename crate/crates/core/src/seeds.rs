//! Counter-based seed splitting.
//!
//! Every randomized operation takes a single master seed. Independent
//! sub-streams (one per scan row, per image, per estimator) use seeds
//! derived by mixing the master seed with a counter, so inserting or
//! reordering work does not perturb unrelated streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive the sub-seed for stream `index` of `master`.
///
/// SplitMix64 finalizer applied to the pair; collision-free in the
/// counter for a fixed master seed.
pub fn split(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for a derived stream.
pub fn rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split(master, index))
}
