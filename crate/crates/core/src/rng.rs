//! Seeded random streams.
//!
//! Every sampler in the crate is a pure function of `(parameters, seed)`.
//! Replicates are sub-seeded with [`sub_seed`], a splitmix64 finalizer applied
//! to `seed` and the replicate index, so replicate `i` can be regenerated
//! without drawing replicates `0..i` first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derived seed for replicate `index` of a stream seeded with `seed`.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(GOLDEN).rotate_left(17))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sub_stream(seed: u64, index: u64) -> Stream {
    stream(sub_seed(seed, index))
}

#[inline]
pub fn normal(rng: &mut Stream) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
pub fn uniform(rng: &mut Stream) -> f64 {
    rng.random::<f64>()
}
