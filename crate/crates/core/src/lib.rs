//! Adversarially learned inference on low-dimensional toy problems.
//!
//! The crate bundles everything needed to train an encoder, a decoder and a
//! joint discriminator against each other on a 2D Gaussian mixture:
//!
//! * [`autodiff`]: a small define-by-run reverse-mode tape,
//! * [`nn`]: MLPs, seeded initialization, Adam, and JSON checkpoints,
//! * [`mixture`]: the grid mixture data distribution,
//! * [`ali`]: the joint adversarial trainer and its conditional variant,
//! * [`baselines`]: GAN, inverse mapping, post-hoc inference, VAE and the
//!   `K + 1`-class semi-supervised discriminator,
//! * [`eval`]: mode coverage, reconstruction, latent diagnostics and exact
//!   tabular checks of the optimal-discriminator identities.

pub mod ali;
pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod mixture;
pub mod nn;
pub mod pipeline;
pub mod train;

pub use autodiff::{Tape, Tensor, Var};
pub use error::{Error, Result};
pub use mixture::GaussianMixture;
pub use nn::{AdamConfig, AdamState, Head, Mlp, Rng};
pub use train::{StepMetrics, TrainConfig};
