//! Seed derivation and the generator used for every random draw.
//!
//! All randomness flows through [`SampleRng`], a ChaCha8 stream generator.
//! ChaCha is counter based and its output is specified bit-for-bit, so a
//! dataset generated from one root seed is identical on every platform.
//! Per-sample streams are derived by mixing the root seed with the sample
//! coordinates through SplitMix64, which lets samples be produced in any
//! order and on any number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds `parts` into `root`, producing a well-mixed child seed.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed for sample `index` of class `class_id` at `jnr_db`.
pub fn sample_seed(root: u64, class_id: u8, jnr_db: f64, index: u64) -> u64 {
    derive_seed(root, &[class_id as u64, jnr_db.to_bits(), index])
}

pub fn rng_from_seed(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}
