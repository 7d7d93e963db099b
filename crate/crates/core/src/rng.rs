//! Deterministic RNG helpers.
//!
//! Every randomized step (sampling, k-means++, bootstrap resampling, splits,
//! synthetic corpora) draws from a ChaCha generator seeded either directly or
//! via [`derive_seed`], so results are reproducible regardless of thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Create a deterministic generator from a seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent sub-seed from a master seed and an index
/// (tree number, repeat number, file number, ...). SplitMix64 finalizer.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
