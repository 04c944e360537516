//! Inference learned adversarially against a frozen, pre-trained decoder.

use crate::ali::{AliModel, AliTrainer};
use crate::error::Result;
use crate::nn::{Head, InitConfig, Mlp, Rng};
use crate::train::{layer_sizes, Architecture, SharedPrior, TrainConfig};

/// ALI trainer around `decoder` with a fresh encoder and joint discriminator.
/// Only the encoder and discriminator are ever updated.
pub fn posthoc_trainer(
    decoder: Mlp,
    arch: &Architecture,
    init: InitConfig,
    config: TrainConfig,
    prior: SharedPrior,
    rng: &mut Rng,
    seed: u64,
) -> Result<AliTrainer> {
    let (dx, dz) = (decoder.out_dim(), decoder.in_dim());
    let encoder = Mlp::init("encoder", &layer_sizes(dx, &arch.encoder_hidden, 2 * dz), Head::SplitGaussian, init, rng)?;
    let discriminator = Mlp::init(
        "discriminator",
        &layer_sizes(dx + dz, &arch.discriminator_hidden, 1),
        Head::Linear,
        init,
        rng,
    )?;
    let model = AliModel::from_parts(encoder, decoder, discriminator, None)?;
    AliTrainer::with_frozen_decoder(model, config, prior, seed)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use super::*;
    use crate::autodiff::Tensor;
    use crate::mixture::GaussianMixture;
    use crate::nn::{rng, AdamConfig, Layer};
    use crate::train::{standard_prior, MixtureSampler};

    fn arch() -> Architecture {
        Architecture {
            encoder_hidden: vec![16],
            decoder_hidden: vec![16],
            discriminator_hidden: vec![32],
            ..Architecture::default()
        }
    }

    #[test]
    fn symmetric_init_and_frozen_decoder() {
        let dec = Mlp::init("decoder", &[2, 16, 2], Head::Linear, InitConfig::default(), &mut rng::seeded(1)).unwrap();
        let mut t = posthoc_trainer(dec.clone(), &arch(), InitConfig::default(), TrainConfig::default(), standard_prior(), &mut rng::seeded(2), 3).unwrap();
        let mut m = t.model().clone();
        m.discriminator = Mlp::zeros("discriminator", m.discriminator.sizes(), Head::Linear, 0.02).unwrap();
        let mut t0 = AliTrainer::with_frozen_decoder(m, TrainConfig::default(), standard_prior(), 3).unwrap();
        let mut data = MixtureSampler {
            mixture: GaussianMixture::grid(3, 1.0, 0.05).unwrap(),
        };
        let s = t0.train_step(&mut data, 100).unwrap();
        assert!((s.ld - 2.0 * LN_2).abs() < 1e-9 && (s.lg - 2.0 * LN_2).abs() < 1e-9);
        for _ in 0..30 {
            t.train_step(&mut data, 20).unwrap();
        }
        assert_eq!(t.model().decoder, dec);
    }

    #[test]
    fn identity_decoder_on_unit_gaussian_recovers_prior_moments() {
        // x ~ N(0, I) and Gx = identity: the matching encoder has q(z) = N(0, I).
        let dec = Mlp::from_layers(
            "decoder",
            vec![Layer {
                weight: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                bias: Tensor::zeros(&[2]),
            }],
            Head::Linear,
            0.02,
        )
        .unwrap();
        let config = TrainConfig {
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            batch_size: 100,
            ..TrainConfig::default()
        };
        let mut t = posthoc_trainer(dec, &arch(), InitConfig::default(), config, standard_prior(), &mut rng::seeded(4), 5).unwrap();
        let mix = GaussianMixture::new(vec![[0.0, 0.0]], vec![[[1.0, 0.0], [0.0, 1.0]]], vec![1.0]).unwrap();
        let mut data = MixtureSampler { mixture: mix.clone() };
        for _ in 0..3000 {
            t.train_step(&mut data, 100).unwrap();
        }
        let mut r = rng::seeded(6);
        let (x, _) = mix.sample(5000, &mut r).unwrap();
        let z = t.model().infer(&x, None, &mut r).unwrap();
        let n = z.rows() as f64;
        for d in 0..2 {
            let col: Vec<f64> = (0..z.rows()).map(|i| z.at(i, d)).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 0.2, "mean {mean}");
            assert!((var - 1.0).abs() < 0.2, "var {var}");
        }
    }
}
