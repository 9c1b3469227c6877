//! Seeded generators for synthetic inputs.
//!
//! All randomness in the crate flows through ChaCha8 with an explicit `u64`
//! seed, so the streams are identical across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Values drawn uniformly from `[-1, 1)`.
pub fn random_vec<T: Scalar>(rng: &mut impl Rng, len: usize) -> Vec<T> {
    (0..len).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect()
}

pub fn random_map<T: Scalar>(
    rng: &mut impl Rng,
    channels: usize,
    height: usize,
    width: usize,
) -> FeatureMap<T> {
    FeatureMap::from_vec(
        channels,
        height,
        width,
        random_vec(rng, channels * height * width),
    )
    .expect("random map dims are non-zero")
}
