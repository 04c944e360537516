//! Fixtures shared by the benchmarks.

use ali_lab_core::nn::{rng, InitConfig};
use ali_lab_core::train::{Architecture, DatasetSampler, TrainConfig};
use ali_lab_core::{GaussianMixture, Tensor};

/// The default 5x5 grid, standardized to unit scale.
pub fn mixture() -> GaussianMixture {
    let raw = GaussianMixture::grid(5, 2.0, 0.05).expect("valid grid");
    let scale = raw.standardization_scale();
    raw.scaled(1.0 / scale).expect("positive scale")
}

pub fn sampler(n: usize) -> DatasetSampler {
    let (x, labels) = mixture().sample(n, &mut rng::seeded(0)).expect("n > 0");
    DatasetSampler::new(x, Some(labels)).expect("labelled data")
}

pub fn architecture(hidden: usize) -> Architecture {
    Architecture {
        encoder_hidden: vec![hidden, hidden],
        decoder_hidden: vec![hidden, hidden],
        discriminator_hidden: vec![hidden, hidden],
        ..Architecture::default()
    }
}

pub fn init() -> InitConfig {
    InitConfig::default()
}

pub fn train_config() -> TrainConfig {
    TrainConfig::default()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    rng::standard_normal(&[rows, cols], &mut rng::seeded(seed))
}
