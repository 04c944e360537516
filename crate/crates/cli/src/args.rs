//! Command-line grammar. Global flags override values from `--config`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{ModelKind, RunConfig};
use crate::error::CliResult;
use crate::evaluate::Which;

#[derive(Debug, Parser)]
#[command(name = "ali-lab", version, about = "Adversarially learned inference on 2-D Gaussian mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; defaults apply to omitted keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Training seed (data seed for `generate-data`, table seed for `oracle`).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "KIND")]
    pub model: Option<ModelKind>,
    /// Training steps, or the checkpoint step for `eval` and `plot`.
    #[arg(long, global = true, value_name = "N")]
    pub steps: Option<u64>,
    /// Sweep size for `search`, number of random tables for `oracle`.
    #[arg(long, global = true, value_name = "N")]
    pub runs: Option<usize>,
    /// Report to compute in `eval`.
    #[arg(long, global = true, value_name = "KIND")]
    pub which: Option<Which>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write train/held-out CSVs and the mixture JSON.
    GenerateData,
    /// Train one model into a run directory.
    Train,
    /// Random hyperparameter sweep with a coverage leaderboard.
    Search,
    /// Evaluate checkpoints of finished runs.
    Eval {
        #[arg(value_name = "RUN_DIR")]
        run_dirs: Vec<PathBuf>,
    },
    /// Draw an SVG figure from evaluated runs.
    Plot {
        #[arg(value_name = "RUN_DIR")]
        run_dirs: Vec<PathBuf>,
    },
    /// Check the optimal-discriminator identities on random tables.
    Oracle,
}

impl Cli {
    /// The file configuration with `--seed`, `--model` and `--steps` applied.
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(n) = self.steps {
            cfg.steps = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
