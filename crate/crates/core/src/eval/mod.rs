//! Quantitative evaluation of trained models and exact checks on tabular
//! joints.

pub mod coverage;
pub mod latent;
pub mod recon;
pub mod theory;

pub use coverage::{mode_coverage, CoverageSummary, ModeCoverageReport};
pub use latent::{latent_occupancy, moment_distance, Histogram2d, LatentOccupancy};
pub use recon::{invertibility_diagnostic, latent_interpolate, reconstruct, InvertibilityReport, Reconstruction};
pub use theory::{jsd_discrete, optimal_discriminator, oracle_report, value_at, DiscreteJoint, DiscriminatorTable, OracleConfig, OracleReport};
