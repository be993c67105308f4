//! Seed derivation.
//!
//! Every random stream is a ChaCha8 generator seeded from a master seed and
//! a path of integer labels, so sharded and nested computations reproduce
//! bit-for-bit regardless of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SchemeRng = ChaCha8Rng;

/// Trials per shard for parallel Monte Carlo loops.
pub const SHARD: usize = 2048;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for child `label` of `seed`.
pub fn derive(seed: u64, label: u64) -> u64 {
    splitmix(splitmix(seed) ^ label.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng_from(seed: u64) -> SchemeRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child stream drawn from a parent stream.
pub fn fork(parent: &mut SchemeRng) -> SchemeRng {
    ChaCha8Rng::seed_from_u64(parent.gen())
}

/// Shard boundaries `(index, start, len)` covering `0..trials`.
pub fn shards(trials: usize) -> Vec<(u64, usize, usize)> {
    (0..trials.div_ceil(SHARD))
        .map(|k| {
            let start = k * SHARD;
            (k as u64, start, SHARD.min(trials - start))
        })
        .collect()
}

/// Draw `R(x)`: each `i` independently with probability `x[i]`.
#[inline]
pub fn sample_set<R: Rng + ?Sized>(x: &[f64], rng: &mut R) -> crate::subset::Subset {
    let mut s = 0u64;
    for (i, &p) in x.iter().enumerate() {
        if p > 0.0 && (p >= 1.0 || rng.gen::<f64>() < p) {
            s |= 1u64 << i;
        }
    }
    crate::subset::Subset(s)
}
