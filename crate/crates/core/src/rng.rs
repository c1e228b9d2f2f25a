//! Seed derivation for independent, reproducible random streams.
//!
//! Every random draw in the engine comes from a ChaCha stream whose seed is
//! a pure function of a base seed and a tuple of integers (pose, sample,
//! trial, ...). Scheduling therefore never influences results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a base seed and a list of stream coordinates into one 64-bit key.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    let mut h = mix(base.wrapping_add(GOLDEN));
    for (i, &c) in coords.iter().enumerate() {
        h = mix(h ^ mix(c.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 2))));
    }
    h
}

/// A ChaCha8 generator for the stream addressed by `coords`.
pub fn stream(base: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, coords))
}
