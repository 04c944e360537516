//! Generator plus a discriminator on `x` alone.

use crate::ali::{discriminator_loss, generator_loss, mean_probability};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{AdamState, BoundMlp, Head, InitConfig, Mlp, Rng};
use crate::nn::rng;
use crate::train::{check_batch, check_finite, collect_grads, layer_sizes, Architecture, DataSampler, SharedPrior, StepMetrics, TrainConfig, DROPOUT_STREAM};

#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub decoder: Mlp,
    pub discriminator: Mlp,
}

impl GanModel {
    /// Decoder and discriminator shaped like their ALI counterparts, except
    /// that the discriminator input is `x` only.
    pub fn new(arch: &Architecture, init: InitConfig, rng: &mut Rng) -> Result<Self> {
        let decoder = Mlp::init("decoder", &layer_sizes(arch.dim_z, &arch.decoder_hidden, arch.dim_x), Head::Linear, init, rng)?;
        let discriminator = Mlp::init(
            "discriminator",
            &layer_sizes(arch.dim_x, &arch.discriminator_hidden, 1),
            Head::Linear,
            init,
            rng,
        )?;
        GanModel::from_parts(decoder, discriminator)
    }

    pub fn from_parts(decoder: Mlp, discriminator: Mlp) -> Result<Self> {
        if decoder.out_dim() != discriminator.in_dim() || discriminator.out_dim() != 1 {
            return Err(Error::contract(format!(
                "inconsistent GAN widths: decoder {:?}, discriminator {:?}",
                decoder.sizes(),
                discriminator.sizes()
            )));
        }
        Ok(GanModel { decoder, discriminator })
    }

    pub fn dim_x(&self) -> usize {
        self.decoder.out_dim()
    }

    pub fn dim_z(&self) -> usize {
        self.decoder.in_dim()
    }

    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        self.decoder.predict(z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanBatch {
    pub x: Tensor,
    pub z: Tensor,
}

pub struct GanTrainer {
    model: GanModel,
    opt_g: AdamState,
    opt_d: AdamState,
    prior: SharedPrior,
    rng: Rng,
    dropout: f64,
    dropout_rng: Rng,
    step: u64,
}

struct Forward {
    tape: Tape,
    decoder: BoundMlp,
    discriminator: BoundMlp,
    logits_q: Var,
    logits_p: Var,
}

impl GanTrainer {
    pub fn new(model: GanModel, config: TrainConfig, prior: SharedPrior, seed: u64) -> Result<Self> {
        check_batch(config.batch_size)?;
        Ok(GanTrainer {
            opt_g: AdamState::for_nets(config.adam, &[&model.decoder])?,
            opt_d: AdamState::for_nets(config.adam, &[&model.discriminator])?,
            model,
            prior,
            rng: rng::seeded(seed),
            dropout: config.discriminator_dropout,
            dropout_rng: rng::stream(seed, DROPOUT_STREAM),
            step: 0,
        })
    }

    pub fn model(&self) -> &GanModel {
        &self.model
    }

    pub fn into_model(self) -> GanModel {
        self.model
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn draw_batch(&mut self, data: &mut dyn DataSampler, m: usize) -> Result<GanBatch> {
        check_batch(m)?;
        if data.dim() != self.model.dim_x() {
            return Err(Error::contract(format!(
                "data width {} but model expects {}",
                data.dim(),
                self.model.dim_x()
            )));
        }
        let (x, _) = data.sample(m, &mut self.rng)?;
        let z = self.prior.sample(m, self.model.dim_z(), &mut self.rng);
        Ok(GanBatch { x, z })
    }

    fn forward(model: &GanModel, batch: &GanBatch, train_decoder: bool, dropout: Option<(f64, &mut Rng)>) -> Result<Forward> {
        let mut tape = Tape::new();
        let decoder = model.decoder.bind(&mut tape, train_decoder);
        let discriminator = model.discriminator.bind(&mut tape, !train_decoder);
        let x = tape.constant(batch.x.clone());
        let z = tape.constant(batch.z.clone());
        let x_tilde = model.decoder.forward(&decoder, &mut tape, z)?;
        let d = &model.discriminator;
        let (logits_q, logits_p) = match dropout {
            Some((rate, rng)) => (
                d.forward_dropout(&discriminator, &mut tape, x, rate, rng)?,
                d.forward_dropout(&discriminator, &mut tape, x_tilde, rate, rng)?,
            ),
            None => (d.forward(&discriminator, &mut tape, x)?, d.forward(&discriminator, &mut tape, x_tilde)?),
        };
        Ok(Forward {
            tape,
            decoder,
            discriminator,
            logits_q,
            logits_p,
        })
    }

    fn metrics(&self, f: &mut Forward) -> Result<(Var, Var, StepMetrics)> {
        let ld = discriminator_loss(&mut f.tape, f.logits_q, f.logits_p)?;
        let lg = generator_loss(&mut f.tape, f.logits_q, f.logits_p)?;
        let metrics = StepMetrics {
            step: self.step,
            ld: f.tape.value(ld).item(),
            lg: f.tape.value(lg).item(),
            mean_dq: mean_probability(f.tape.value(f.logits_q)),
            mean_dp: mean_probability(f.tape.value(f.logits_p)),
        };
        check_finite("losses", self.step, &[metrics.ld, metrics.lg])?;
        Ok((ld, lg, metrics))
    }

    pub fn evaluate(&self, batch: &GanBatch) -> Result<StepMetrics> {
        let mut f = GanTrainer::forward(&self.model, batch, false, None)?;
        Ok(self.metrics(&mut f)?.2)
    }

    pub fn discriminator_update(&mut self, batch: &GanBatch) -> Result<StepMetrics> {
        let mut f = GanTrainer::forward(&self.model, batch, false, Some((self.dropout, &mut self.dropout_rng)))?;
        let (ld, _, metrics) = self.metrics(&mut f)?;
        let grads = f.tape.backward(ld)?;
        let g = collect_grads(&grads, &f.tape, &[&f.discriminator]);
        self.opt_d.step(&mut [&mut self.model.discriminator], &g)?;
        Ok(metrics)
    }

    pub fn generator_update(&mut self, batch: &GanBatch) -> Result<f64> {
        let mut f = GanTrainer::forward(&self.model, batch, true, Some((self.dropout, &mut self.dropout_rng)))?;
        let (_, lg, metrics) = self.metrics(&mut f)?;
        let grads = f.tape.backward(lg)?;
        let g = collect_grads(&grads, &f.tape, &[&f.decoder]);
        self.opt_g.step(&mut [&mut self.model.decoder], &g)?;
        Ok(metrics.lg)
    }

    /// Discriminator update, then a generator update on a fresh batch.
    pub fn train_step(&mut self, data: &mut dyn DataSampler, m: usize) -> Result<StepMetrics> {
        let batch = self.draw_batch(data, m)?;
        let metrics = self.discriminator_update(&batch)?;
        let batch = self.draw_batch(data, m)?;
        self.generator_update(&batch)?;
        self.step += 1;
        Ok(metrics)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use super::*;
    use crate::mixture::GaussianMixture;
    use crate::train::{standard_prior, MixtureSampler};

    fn arch() -> Architecture {
        Architecture {
            decoder_hidden: vec![8],
            discriminator_hidden: vec![8],
            ..Architecture::default()
        }
    }

    fn data() -> MixtureSampler {
        MixtureSampler {
            mixture: GaussianMixture::grid(3, 1.0, 0.05).unwrap(),
        }
    }

    #[test]
    fn symmetric_init_first_step_losses() {
        let mut m = GanModel::new(&arch(), InitConfig::default(), &mut rng::seeded(1)).unwrap();
        m.discriminator = Mlp::zeros("discriminator", m.discriminator.sizes(), Head::Linear, 0.02).unwrap();
        let mut t = GanTrainer::new(m, TrainConfig::default(), standard_prior(), 2).unwrap();
        let s = t.train_step(&mut data(), 100).unwrap();
        assert!((s.ld - 2.0 * LN_2).abs() < 1e-9 && (s.lg - 2.0 * LN_2).abs() < 1e-9);
    }

    #[test]
    fn discriminator_sees_only_x() {
        let m = GanModel::new(&Architecture::default(), InitConfig::default(), &mut rng::seeded(1)).unwrap();
        assert_eq!(m.discriminator.sizes(), &[2, 64, 64, 1]);
        assert_eq!(m.decoder.sizes(), &[2, 64, 64, 2]);
    }

    #[test]
    fn deterministic_under_seed() {
        let run = || {
            let m = GanModel::new(&arch(), InitConfig::default(), &mut rng::seeded(3)).unwrap();
            let mut t = GanTrainer::new(m, TrainConfig::default(), standard_prior(), 4).unwrap();
            let mut d = data();
            (0..5).map(|_| t.train_step(&mut d, 16).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn updates_are_isolated() {
        let m = GanModel::new(&arch(), InitConfig { std: 0.3, leaky_slope: 0.2 }, &mut rng::seeded(5)).unwrap();
        let mut t = GanTrainer::new(m, TrainConfig::default(), standard_prior(), 6).unwrap();
        let b = t.draw_batch(&mut data(), 16).unwrap();
        let before = t.model().clone();
        t.discriminator_update(&b).unwrap();
        assert_eq!(t.model().decoder, before.decoder);
        let mid = t.model().clone();
        t.generator_update(&b).unwrap();
        assert_eq!(t.model().discriminator, mid.discriminator);
        assert_ne!(t.model().decoder, mid.decoder);
    }
}
