//! Multilayer perceptrons, parameter initialization, and Adam.

mod adam;
mod checkpoint;
mod mlp;
pub mod rng;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{ModelCheckpoint, NetworkCheckpoint, CHECKPOINT_FORMAT_VERSION};
pub use mlp::{BoundMlp, Head, InitConfig, Layer, Mlp, LOG_SIGMA_MAX, LOG_SIGMA_MIN};
pub use rng::Rng;
