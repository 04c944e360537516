//! Comparison models: a marginal GAN, two ways of bolting inference onto a
//! trained GAN decoder, a VAE, and a semi-supervised joint discriminator.

pub mod gan;
pub mod invmap;
pub mod posthoc;
pub mod semisup;
pub mod vae;

pub use gan::{GanBatch, GanModel, GanTrainer};
pub use invmap::InverseMappingTrainer;
pub use posthoc::posthoc_trainer;
pub use semisup::{LabelledSplit, SemiSupBatch, SemiSupModel, SemiSupStep, SemiSupTrainer};
pub use vae::{kl_to_standard_normal, VaeModel, VaeStep, VaeTrainer};
