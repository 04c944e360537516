//! Adversarially learned inference.
//!
//! An encoder `Gz(x)`, a decoder `Gx(z)` and a discriminator `D(x, z)` play
//! a two-player game: `D` separates encoder pairs `(x, Gz(x))`, `x ~ q(x)`,
//! from decoder pairs `(Gx(z), z)`, `z ~ p(z)`, while the encoder and decoder
//! jointly try to make the two kinds of pair indistinguishable.
//!
//! All losses work on discriminator logits through softplus, so `log D` and
//! `log(1 - D)` stay finite however far the discriminator saturates.

mod model;
mod trainer;

pub use model::{AliModel, BoundAli, Conditioning};
pub use trainer::{AliTrainer, Batch};

use crate::autodiff::{kernels, Tape, Tensor, Var};
use crate::error::Result;

/// `L_d = -mean log σ(ℓq) - mean log(1 - σ(ℓp))`.
pub fn discriminator_loss(tape: &mut Tape, logits_q: Var, logits_p: Var) -> Result<Var> {
    let nq = tape.neg(logits_q);
    let sq = tape.softplus(nq);
    let a = tape.mean(sq);
    let sp = tape.softplus(logits_p);
    let b = tape.mean(sp);
    tape.add(a, b)
}

/// `L_g = -mean log(1 - σ(ℓq)) - mean log σ(ℓp)`: the role-swapped
/// counterpart of [`discriminator_loss`].
pub fn generator_loss(tape: &mut Tape, logits_q: Var, logits_p: Var) -> Result<Var> {
    discriminator_loss(tape, logits_p, logits_q)
}

/// Mean of `σ(logit)` over a tensor of logits.
pub fn mean_probability(logits: &Tensor) -> f64 {
    logits.data().iter().map(|&l| kernels::sigmoid(l)).sum::<f64>() / logits.len() as f64
}
