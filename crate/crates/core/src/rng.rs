//! Deterministic seed derivation.
//!
//! Stochastic components (noisy mechanisms, estimators, samplers) derive all
//! randomness from explicit `u64` seeds. Per-query noise streams are keyed by
//! hashing the query content together with the component seed, so repeated
//! queries for the same point see the same draw within and across runs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; full-period bijective mixer on u64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a single seed, order-sensitively.
pub fn fold_seed(seed: u64, words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    for w in words {
        h = splitmix64(h ^ w);
    }
    h
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    fold_seed(seed, label.bytes().map(u64::from))
}

/// Seed keyed on a query point `(x, a, a')`: identical queries share a stream.
pub fn query_seed(seed: u64, x: &[f64], a: u8, a_prime: u8) -> u64 {
    let words = x
        .iter()
        .map(|v| v.to_bits())
        .chain([u64::from(a), u64::from(a_prime)]);
    fold_seed(seed, words)
}

/// Deterministic RNG for a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
