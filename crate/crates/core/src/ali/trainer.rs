use rand::SeedableRng;

use super::model::{AliModel, BoundAli, Trainable};
use super::{discriminator_loss, generator_loss, mean_probability};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{rng, AdamState, BoundMlp, Rng};
use crate::train::{check_batch, check_finite, collect_grads, DataSampler, SharedPrior, StepMetrics, TrainConfig, DROPOUT_STREAM};

/// Inputs of one forward pass: data, prior codes, encoder noise and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub z: Tensor,
    pub noise: Tensor,
    pub labels: Option<Vec<usize>>,
}

/// Alternating discriminator/generator optimization of an [`AliModel`].
///
/// With a frozen decoder only the encoder side of the generator moves, which
/// is inference learned after the fact against a fixed decoder.
pub struct AliTrainer {
    model: AliModel,
    opt_g: AdamState,
    opt_d: AdamState,
    config: TrainConfig,
    prior: SharedPrior,
    rng: Rng,
    dropout_rng: Rng,
    step: u64,
    train_decoder: bool,
}

struct Forward {
    tape: Tape,
    bound: BoundAli,
    logits_q: Var,
    logits_p: Var,
}

impl AliTrainer {
    pub fn new(model: AliModel, config: TrainConfig, prior: SharedPrior, seed: u64) -> Result<Self> {
        AliTrainer::build(model, config, prior, seed, true)
    }

    /// Trainer whose decoder never changes.
    pub fn with_frozen_decoder(model: AliModel, config: TrainConfig, prior: SharedPrior, seed: u64) -> Result<Self> {
        AliTrainer::build(model, config, prior, seed, false)
    }

    fn build(model: AliModel, config: TrainConfig, prior: SharedPrior, seed: u64, train_decoder: bool) -> Result<Self> {
        check_batch(config.batch_size)?;
        let opt_g = AdamState::for_nets(config.adam, &model.generator_subset(train_decoder))?;
        let opt_d = AdamState::for_nets(config.adam, &model.discriminator_networks())?;
        Ok(AliTrainer {
            model,
            opt_g,
            opt_d,
            config,
            prior,
            rng: Rng::seed_from_u64(seed),
            dropout_rng: rng::stream(seed, DROPOUT_STREAM),
            step: 0,
            train_decoder,
        })
    }

    pub fn model(&self) -> &AliModel {
        &self.model
    }

    pub fn into_model(self) -> AliModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed training steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn trains_decoder(&self) -> bool {
        self.train_decoder
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }

    /// Draws `m` data rows, `m` prior codes and `m` encoder noise rows.
    pub fn draw_batch(&mut self, data: &mut dyn DataSampler, m: usize) -> Result<Batch> {
        check_batch(m)?;
        let (dx, dz) = (self.model.dim_x(), self.model.dim_z());
        if data.dim() != dx {
            return Err(Error::contract(format!("data width {} but model expects {dx}", data.dim())));
        }
        let (x, labels) = data.sample(m, &mut self.rng)?;
        if self.model.conditioning.is_some() && labels.is_none() {
            return Err(Error::contract("conditional training needs labelled data"));
        }
        let z = self.prior.sample(m, dz, &mut self.rng);
        let noise = rng::standard_normal(&[m, dz], &mut self.rng);
        Ok(Batch { x, z, noise, labels })
    }

    fn forward(m: &AliModel, batch: &Batch, trainable: Trainable, mut dropout: Option<(f64, &mut Rng)>) -> Result<Forward> {
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, trainable);
        let x = tape.constant(batch.x.clone());
        let z = tape.constant(batch.z.clone());
        let noise = tape.constant(batch.noise.clone());
        let y = match (&m.conditioning, &batch.labels) {
            (None, _) => None,
            (Some(_), Some(l)) => Some(tape.constant(m.one_hot(l)?)),
            (Some(_), None) => return Err(Error::contract("conditional training needs labels")),
        };
        let z_hat = m.encode(&bound, &mut tape, x, noise, y)?;
        let x_tilde = m.decode(&bound, &mut tape, z, y)?;
        let logits_q = m.discriminate_dropout(&bound, &mut tape, x, z_hat, y, dropout.as_mut().map(|(r, g)| (*r, &mut **g)))?;
        let logits_p = m.discriminate_dropout(&bound, &mut tape, x_tilde, z, y, dropout.as_mut().map(|(r, g)| (*r, &mut **g)))?;
        Ok(Forward {
            tape,
            bound,
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

    /// Losses and mean discriminator outputs on `batch`, without updating.
    pub fn evaluate(&self, batch: &Batch) -> Result<StepMetrics> {
        let mut f = AliTrainer::forward(&self.model, batch, Trainable::Discriminator, None)?;
        Ok(self.metrics(&mut f)?.2)
    }

    /// One Adam step of the discriminator on `Ld`. Returns the metrics
    /// measured before the update.
    pub fn discriminator_update(&mut self, batch: &Batch) -> Result<StepMetrics> {
        let dropout = Some((self.config.discriminator_dropout, &mut self.dropout_rng));
        let mut f = AliTrainer::forward(&self.model, batch, Trainable::Discriminator, dropout)?;
        let (ld, _, metrics) = self.metrics(&mut f)?;
        let grads = f.tape.backward(ld)?;
        let mut bound = vec![&f.bound.discriminator];
        if let Some(e) = &f.bound.embeddings {
            bound.push(&e[2]);
        }
        let g = collect_grads(&grads, &f.tape, &bound);
        self.opt_d.step(&mut self.model.discriminator_networks_mut(), &g)?;
        Ok(metrics)
    }

    /// One Adam step of the generator side on `Lg`. Returns `Lg` before the update.
    pub fn generator_update(&mut self, batch: &Batch) -> Result<f64> {
        let trainable = Trainable::Generator {
            decoder: self.train_decoder,
        };
        let dropout = Some((self.config.discriminator_dropout, &mut self.dropout_rng));
        let mut f = AliTrainer::forward(&self.model, batch, trainable, dropout)?;
        let lg = generator_loss(&mut f.tape, f.logits_q, f.logits_p)?;
        let value = f.tape.value(lg).item();
        check_finite("generator loss", self.step, &[value])?;
        let grads = f.tape.backward(lg)?;
        let bound = generator_bound(&f.bound, self.train_decoder);
        let g = collect_grads(&grads, &f.tape, &bound);
        self.opt_g.step(&mut self.model.generator_networks_mut(self.train_decoder), &g)?;
        Ok(value)
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

fn generator_bound(b: &BoundAli, decoder: bool) -> Vec<&BoundMlp> {
    let mut v = vec![&b.encoder];
    if decoder {
        v.push(&b.decoder);
    }
    if let Some(e) = &b.embeddings {
        v.push(&e[0]);
        if decoder {
            v.push(&e[1]);
        }
    }
    v
}
