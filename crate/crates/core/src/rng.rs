//! Seed derivation. Every random decision in the crate draws from a ChaCha8
//! stream keyed by a tuple of integers, so that one decision never shifts the
//! random numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a key tuple.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

// Domain tags, so that e.g. the split of user 3 and the init sample never
// share a stream even under the same base seed.
pub(crate) const TAG_SPLIT: u64 = 1;
pub(crate) const TAG_INIT_KNOWN: u64 = 2;
pub(crate) const TAG_RANDOM_STRATEGY: u64 = 3;
pub(crate) const TAG_EQUAL_RATIO: u64 = 4;
pub(crate) const TAG_VALIDATION: u64 = 5;
pub(crate) const TAG_MF_INIT: u64 = 6;
pub(crate) const TAG_MF_SHUFFLE: u64 = 7;
pub(crate) const TAG_SYNTH: u64 = 8;
