//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), seeded
//! through `SeedableRng::seed_from_u64`. Independent streams of one seed are
//! selected with ChaCha's 64-bit stream id, so a seed reproduces bit-for-bit
//! on every platform.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Tensor;

pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Stream `stream` of `seed`; distinct streams never overlap.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Tensor of independent standard normal draws.
pub fn standard_normal(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}
