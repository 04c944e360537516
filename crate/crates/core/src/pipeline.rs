//! Encoder and decoder wiring shared by trainers and evaluation.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{rng, BoundMlp, Head, Mlp, Rng};

/// Reparametrized encoder sample `ẑ = μ(x) + exp(log σ(x)) ⊙ ε` on the tape.
pub fn encode_on_tape(
    encoder: &Mlp,
    bound: &BoundMlp,
    tape: &mut Tape,
    x: Var,
    noise: Var,
) -> Result<Var> {
    let (mu, log_sigma) = encoder.forward_gaussian(bound, tape, x)?;
    let (ms, ns) = (tape.value(mu).shape(), tape.value(noise).shape());
    if ms != ns {
        return Err(Error::shape("encode", &[ms, ns]));
    }
    let sigma = tape.exp(log_sigma);
    let spread = tape.mul(sigma, noise)?;
    tape.add(mu, spread)
}

/// How an encoder turns data into codes outside of training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderMode {
    /// One reparametrized draw per input.
    Sample,
    /// The mean head only.
    Mean,
}

/// An encoder network together with how its output is read.
///
/// Networks without a split-gaussian head are treated as deterministic maps.
#[derive(Clone, Copy, Debug)]
pub struct Encoder<'a> {
    pub net: &'a Mlp,
    pub mode: EncoderMode,
}

impl<'a> Encoder<'a> {
    pub fn sampling(net: &'a Mlp) -> Self {
        Encoder {
            net,
            mode: EncoderMode::Sample,
        }
    }

    pub fn mean_only(net: &'a Mlp) -> Self {
        Encoder {
            net,
            mode: EncoderMode::Mean,
        }
    }

    pub fn dim_z(&self) -> usize {
        match self.net.head() {
            Head::SplitGaussian => self.net.out_dim() / 2,
            _ => self.net.out_dim(),
        }
    }

    /// Codes for `x`, drawing noise from `rng` in sampling mode.
    pub fn encode(&self, x: &Tensor, rng: &mut Rng) -> Result<Tensor> {
        match (self.net.head(), self.mode) {
            (Head::SplitGaussian, EncoderMode::Sample) => {
                let (mu, log_sigma) = self.net.predict_gaussian(x)?;
                let eps = rng::standard_normal(mu.shape(), rng);
                let mut z = mu;
                for ((z, s), e) in z.data_mut().iter_mut().zip(log_sigma.data()).zip(eps.data()) {
                    *z += s.exp() * e;
                }
                Ok(z)
            }
            _ => self.mean(x),
        }
    }

    pub fn mean(&self, x: &Tensor) -> Result<Tensor> {
        match self.net.head() {
            Head::SplitGaussian => Ok(self.net.predict_gaussian(x)?.0),
            _ => self.net.predict(x),
        }
    }
}

/// Deterministic decode: the mean half of a split-gaussian decoder, else the
/// network output.
pub fn decode_mean(decoder: &Mlp, z: &Tensor) -> Result<Tensor> {
    match decoder.head() {
        Head::SplitGaussian => Ok(decoder.predict_gaussian(z)?.0),
        _ => decoder.predict(z),
    }
}

/// A draw from the decoder's conditional: adds Gaussian noise for a
/// split-gaussian decoder, deterministic otherwise.
pub fn decode_sample(decoder: &Mlp, z: &Tensor, rng: &mut Rng) -> Result<Tensor> {
    match decoder.head() {
        Head::SplitGaussian => Encoder::sampling(decoder).encode(z, rng),
        _ => decoder.predict(z),
    }
}
