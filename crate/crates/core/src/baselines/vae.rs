//! Variational autoencoder with Gaussian encoder and decoder.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{rng, AdamState, BoundMlp, Head, InitConfig, Mlp, Rng};
use crate::pipeline::encode_on_tape;
use crate::train::{check_batch, check_finite, collect_grads, layer_sizes, Architecture, DataSampler, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel {
    /// `dim_x → [μ_z | log σ_z]`
    pub encoder: Mlp,
    /// `dim_z → [μ_x | log σ_x]`
    pub decoder: Mlp,
}

/// Per-step averages over the batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeStep {
    pub step: u64,
    pub elbo: f64,
    /// `E_q[log p(x | z)]`, one reparametrized sample.
    pub recon_term: f64,
    /// `KL(q(z | x) ‖ N(0, I))`, analytic.
    pub kl_term: f64,
}

/// Loss pieces recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct ElboVars {
    /// `-ELBO`, the minimized quantity.
    pub loss: Var,
    pub recon: Var,
    pub kl: Var,
}

impl VaeModel {
    pub fn new(arch: &Architecture, init: InitConfig, rng: &mut Rng) -> Result<Self> {
        let (dx, dz) = (arch.dim_x, arch.dim_z);
        let encoder = Mlp::init("encoder", &layer_sizes(dx, &arch.encoder_hidden, 2 * dz), Head::SplitGaussian, init, rng)?;
        let decoder = Mlp::init("decoder", &layer_sizes(dz, &arch.decoder_hidden, 2 * dx), Head::SplitGaussian, init, rng)?;
        VaeModel::from_parts(encoder, decoder)
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp) -> Result<Self> {
        let split = encoder.head() == Head::SplitGaussian && decoder.head() == Head::SplitGaussian;
        if !split || encoder.out_dim() != 2 * decoder.in_dim() || decoder.out_dim() != 2 * encoder.in_dim() {
            return Err(Error::contract(format!(
                "VAE needs split-gaussian heads of widths 2·dim_z and 2·dim_x, got encoder {:?}, decoder {:?}",
                encoder.sizes(),
                decoder.sizes()
            )));
        }
        Ok(VaeModel { encoder, decoder })
    }

    pub fn dim_x(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn dim_z(&self) -> usize {
        self.decoder.in_dim()
    }

    /// `-ELBO` for data `x` with encoder noise `noise`, both `[M × ·]`.
    pub fn negative_elbo(&self, enc: &BoundMlp, dec: &BoundMlp, tape: &mut Tape, x: Var, noise: Var) -> Result<ElboVars> {
        let m = tape.value(x).rows() as f64;
        let z = encode_on_tape(&self.encoder, enc, tape, x, noise)?;
        let (mu_z, ls_z) = self.encoder.forward_gaussian(enc, tape, x)?;
        let (mu_x, ls_x) = self.decoder.forward_gaussian(dec, tape, z)?;

        // log N(x; μ, σ²) summed over dims, averaged over rows
        let diff = tape.sub(x, mu_x)?;
        let neg = tape.neg(ls_x);
        let inv = tape.exp(neg);
        let r = tape.mul(diff, inv)?;
        let sq = tape.square(r);
        let half = tape.scale(sq, 0.5);
        let per = tape.add(half, ls_x)?;
        let total = tape.sum(per);
        let nll = tape.scale(total, 1.0 / m);
        let c = tape.constant(Tensor::scalar(0.5 * (2.0 * PI).ln() * self.dim_x() as f64));
        let nll = tape.add(nll, c)?;
        let recon = tape.neg(nll);

        let kl = kl_on_tape(tape, mu_z, ls_z)?;
        let loss = tape.add(nll, kl)?;
        Ok(ElboVars { loss, recon, kl })
    }
}

/// Analytic `KL(N(μ, σ²) ‖ N(0, I))` summed over dims, averaged over rows.
fn kl_on_tape(tape: &mut Tape, mu: Var, log_sigma: Var) -> Result<Var> {
    let (m, d) = (tape.value(mu).rows() as f64, tape.value(mu).cols() as f64);
    let mu2 = tape.square(mu);
    let a = tape.sum(mu2);
    let two = tape.scale(log_sigma, 2.0);
    let var = tape.exp(two);
    let b = tape.sum(var);
    let s = tape.sum(log_sigma);
    let c = tape.scale(s, -2.0);
    let ab = tape.add(a, b)?;
    let abc = tape.add(ab, c)?;
    let kl = tape.scale(abc, 0.5 / m);
    let offset = tape.constant(Tensor::scalar(-0.5 * d));
    tape.add(kl, offset)
}

/// Mean over rows of `KL(N(μ, σ²) ‖ N(0, I))` for `[M × dim_z]` heads.
pub fn kl_to_standard_normal(mu: &Tensor, log_sigma: &Tensor) -> Result<f64> {
    if mu.shape() != log_sigma.shape() || !mu.is_matrix() {
        return Err(Error::shape("kl_to_standard_normal", &[mu.shape(), log_sigma.shape()]));
    }
    let total: f64 = mu
        .data()
        .iter()
        .zip(log_sigma.data())
        .map(|(&m, &s)| 0.5 * (m * m + (2.0 * s).exp() - 1.0 - 2.0 * s))
        .sum();
    Ok(total / mu.rows() as f64)
}

pub struct VaeTrainer {
    model: VaeModel,
    opt: AdamState,
    rng: Rng,
    step: u64,
}

impl VaeTrainer {
    pub fn new(model: VaeModel, config: TrainConfig, seed: u64) -> Result<Self> {
        check_batch(config.batch_size)?;
        Ok(VaeTrainer {
            opt: AdamState::for_nets(config.adam, &[&model.encoder, &model.decoder])?,
            model,
            rng: rng::seeded(seed),
            step: 0,
        })
    }

    pub fn model(&self) -> &VaeModel {
        &self.model
    }

    pub fn into_model(self) -> VaeModel {
        self.model
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One Adam step maximizing the ELBO. Returns the terms before the update.
    pub fn train_step(&mut self, data: &mut dyn DataSampler, m: usize) -> Result<VaeStep> {
        check_batch(m)?;
        if data.dim() != self.model.dim_x() {
            return Err(Error::contract(format!(
                "data width {} but model expects {}",
                data.dim(),
                self.model.dim_x()
            )));
        }
        let (x, _) = data.sample(m, &mut self.rng)?;
        let noise = rng::standard_normal(&[m, self.model.dim_z()], &mut self.rng);
        let mut tape = Tape::new();
        let enc = self.model.encoder.bind(&mut tape, true);
        let dec = self.model.decoder.bind(&mut tape, true);
        let (xv, ev) = (tape.constant(x), tape.constant(noise));
        let vars = self.model.negative_elbo(&enc, &dec, &mut tape, xv, ev)?;
        let out = VaeStep {
            step: self.step,
            elbo: -tape.value(vars.loss).item(),
            recon_term: tape.value(vars.recon).item(),
            kl_term: tape.value(vars.kl).item(),
        };
        check_finite("ELBO", self.step, &[out.elbo])?;
        let grads = tape.backward(vars.loss)?;
        let g = collect_grads(&grads, &tape, &[&enc, &dec]);
        self.opt.step(&mut [&mut self.model.encoder, &mut self.model.decoder], &g)?;
        self.step += 1;
        Ok(out)
    }
}
