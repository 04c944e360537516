//! Encoder regressed onto the latent codes of a frozen decoder.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::nn::{rng, AdamConfig, AdamState, Head, InitConfig, Mlp, Rng};
use crate::train::{check_batch, check_finite, collect_grads, layer_sizes, SharedPrior};

/// Trains a deterministic encoder to minimize `E_z ‖z - Gz(Gx(z))‖²` with the
/// decoder held fixed.
pub struct InverseMappingTrainer {
    encoder: Mlp,
    decoder: Mlp,
    opt: AdamState,
    prior: SharedPrior,
    rng: Rng,
    step: u64,
}

impl InverseMappingTrainer {
    /// Fresh linear-head encoder `dim_x → hidden → dim_z`.
    pub fn new_encoder(dim_x: usize, hidden: &[usize], dim_z: usize, init: InitConfig, rng: &mut Rng) -> Result<Mlp> {
        Mlp::init("encoder", &layer_sizes(dim_x, hidden, dim_z), Head::Linear, init, rng)
    }

    pub fn new(encoder: Mlp, decoder: Mlp, adam: AdamConfig, prior: SharedPrior, seed: u64) -> Result<Self> {
        if encoder.head() != Head::Linear {
            return Err(Error::contract("inverse-mapping encoder needs a linear head"));
        }
        if encoder.in_dim() != decoder.out_dim() || encoder.out_dim() != decoder.in_dim() {
            return Err(Error::contract(format!(
                "encoder {:?} does not invert decoder {:?}",
                encoder.sizes(),
                decoder.sizes()
            )));
        }
        Ok(InverseMappingTrainer {
            opt: AdamState::for_nets(adam, &[&encoder])?,
            encoder,
            decoder,
            prior,
            rng: rng::seeded(seed),
            step: 0,
        })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn into_encoder(self) -> Mlp {
        self.encoder
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Mean over rows of `‖z - Gz(Gx(z))‖²`, without updating.
    pub fn loss(&self, z: &Tensor) -> Result<f64> {
        let x = self.decoder.predict(z)?;
        let back = self.encoder.predict(&x)?;
        Ok(z.data().iter().zip(back.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / z.rows() as f64)
    }

    /// One Adam step on a fresh prior batch of `m` codes. Returns the loss
    /// before the update.
    pub fn train_step(&mut self, m: usize) -> Result<f64> {
        check_batch(m)?;
        let z = self.prior.sample(m, self.decoder.in_dim(), &mut self.rng);
        let x = self.decoder.predict(&z)?;
        let mut tape = Tape::new();
        let bound = self.encoder.bind(&mut tape, true);
        let xv = tape.constant(x);
        let zv = tape.constant(z);
        let back = self.encoder.forward(&bound, &mut tape, xv)?;
        let diff = tape.sub(zv, back)?;
        let sq = tape.square(diff);
        let total = tape.sum(sq);
        let loss = tape.scale(total, 1.0 / m as f64);
        let value = tape.value(loss).item();
        check_finite("inverse-mapping loss", self.step, &[value])?;
        let grads = tape.backward(loss)?;
        let g = collect_grads(&grads, &tape, &[&bound]);
        self.opt.step(&mut [&mut self.encoder], &g)?;
        self.step += 1;
        Ok(value)
    }
}
