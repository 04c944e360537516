//! Run configuration, read from TOML.
//!
//! Every field has a default, unknown keys are rejected, and the effective
//! configuration (file values plus command-line overrides) is written into
//! each run directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ali_lab_core::nn::{AdamConfig, InitConfig};
use ali_lab_core::train::{Architecture, TrainConfig};
use ali_lab_core::GaussianMixture;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ali,
    Gan,
    Vae,
    Invmap,
    Posthoc,
    CondAli,
    Semisup,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ali => "ali",
            ModelKind::Gan => "gan",
            ModelKind::Vae => "vae",
            ModelKind::Invmap => "invmap",
            ModelKind::Posthoc => "posthoc",
            ModelKind::CondAli => "cond-ali",
            ModelKind::Semisup => "semisup",
        }
    }

    /// Trained with a discriminator, so every metrics column is filled.
    pub fn is_adversarial(self) -> bool {
        !matches!(self, ModelKind::Vae | ModelKind::Invmap)
    }

    /// Starts from the decoder of an existing run.
    pub fn needs_base(self) -> bool {
        matches!(self, ModelKind::Invmap | ModelKind::Posthoc)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        <ModelKind as clap::ValueEnum>::from_str(s, true).map_err(|_| CliError::Config(format!("unknown model kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Components per grid side.
    pub side: usize,
    pub spacing: f64,
    pub sigma: f64,
    /// Coordinates are divided by this; defaults to the largest absolute
    /// centroid coordinate.
    pub scale: Option<f64>,
    pub n_train: usize,
    pub n_heldout: usize,
    /// Seed of the dataset draws, independent of the training seed.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            side: 5,
            spacing: 2.0,
            sigma: 0.05,
            scale: None,
            n_train: 100_000,
            n_heldout: 10_000,
            seed: 0,
        }
    }
}

impl DataConfig {
    /// The grid mixture before standardization.
    pub fn raw_mixture(&self) -> CliResult<GaussianMixture> {
        GaussianMixture::grid(self.side, self.spacing, self.sigma).map_err(|e| CliError::Config(format!("data: {e}")))
    }

    pub fn scale_for(&self, raw: &GaussianMixture) -> f64 {
        self.scale.unwrap_or_else(|| raw.standardization_scale())
    }

    /// The standardized mixture models are trained on.
    pub fn mixture(&self) -> CliResult<GaussianMixture> {
        let raw = self.raw_mixture()?;
        raw.scaled(1.0 / self.scale_for(&raw)).map_err(|e| CliError::Config(format!("data: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dims {
    pub dim_x: usize,
    pub dim_z: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { dim_x: 2, dim_z: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Network {
    pub hidden: Vec<usize>,
    /// Dropout rate on hidden activations; discriminator only.
    pub dropout: f64,
}

impl Default for Network {
    fn default() -> Self {
        Network {
            hidden: vec![64, 64],
            dropout: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Optimizer {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Optimizer {
    fn default() -> Self {
        let a = AdamConfig::default();
        Optimizer {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Init {
    pub std: f64,
    pub leaky_slope: f64,
}

impl Default for Init {
    fn default() -> Self {
        let i = InitConfig::default();
        Init {
            std: i.std,
            leaky_slope: i.leaky_slope,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemiSup {
    /// Labelled rows kept out of the training set, spread over classes.
    pub labels: usize,
}

impl Default for SemiSup {
    fn default() -> Self {
        SemiSup { labels: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cond {
    /// Width of the label embedding; labels are grid rows.
    pub embed_dim: usize,
}

impl Default for Cond {
    fn default() -> Self {
        Cond { embed_dim: 8 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Base {
    /// Checkpoint file or run directory whose decoder is reused.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Search {
    pub runs: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    pub beta1: Vec<f64>,
    pub std_min: f64,
    pub std_max: f64,
}

impl Default for Search {
    fn default() -> Self {
        Search {
            runs: 10,
            lr_min: 1e-5,
            lr_max: 1e-3,
            beta1: vec![0.5, 0.9],
            std_min: 0.003,
            std_max: 0.03,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Eval {
    /// Model samples drawn for mode coverage.
    pub coverage_samples: usize,
    pub interp_steps: usize,
    pub histogram_bins: usize,
    pub histogram_extent: f64,
}

impl Default for Eval {
    fn default() -> Self {
        Eval {
            coverage_samples: 10_000,
            interp_steps: 9,
            histogram_bins: 40,
            histogram_extent: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    /// Metrics rows are written every this many steps.
    pub log_every: u64,
    /// Checkpoint and coverage snapshot cadence.
    pub eval_every: u64,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub dims: Dims,
    pub encoder: Network,
    pub decoder: Network,
    pub discriminator: Network,
    pub optimizer: Optimizer,
    pub init: Init,
    pub semisup: SemiSup,
    pub cond: Cond,
    pub base: Base,
    pub search: Search,
    pub eval: Eval,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Ali,
            seed: 1,
            steps: 30_000,
            batch_size: 100,
            log_every: 10,
            eval_every: 5_000,
            out: None,
            data: DataConfig::default(),
            dims: Dims::default(),
            encoder: Network::default(),
            decoder: Network::default(),
            discriminator: Network::default(),
            optimizer: Optimizer::default(),
            init: Init::default(),
            semisup: SemiSup::default(),
            cond: Cond::default(),
            base: Base::default(),
            search: Search::default(),
            eval: Eval::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be a positive number, got {v}")))
    }
}

fn nonzero(name: &str, v: u64) -> CliResult<()> {
    if v == 0 {
        Err(CliError::Config(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Checks every field before any work starts.
    pub fn validate(&self) -> CliResult<()> {
        nonzero("steps", self.steps)?;
        nonzero("batch_size", self.batch_size as u64)?;
        nonzero("log_every", self.log_every)?;
        nonzero("eval_every", self.eval_every)?;
        let d = &self.data;
        nonzero("data.side", d.side as u64)?;
        positive("data.spacing", d.spacing)?;
        positive("data.sigma", d.sigma)?;
        if let Some(s) = d.scale {
            positive("data.scale", s)?;
        }
        nonzero("data.n_train", d.n_train as u64)?;
        if d.n_heldout < 100 {
            return Err(CliError::Config("data.n_heldout must be >= 100".into()));
        }
        if self.dims.dim_x != 2 {
            return Err(CliError::Config("dims.dim_x must be 2 for the planar mixture".into()));
        }
        nonzero("dims.dim_z", self.dims.dim_z as u64)?;
        for (name, n) in [("encoder", &self.encoder), ("decoder", &self.decoder), ("discriminator", &self.discriminator)] {
            if n.hidden.contains(&0) {
                return Err(CliError::Config(format!("{name}.hidden widths must be >= 1")));
            }
        }
        for (name, n) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            if n.dropout != 0.0 {
                return Err(CliError::Config(format!("{name}.dropout is not supported; only the discriminator uses dropout")));
            }
        }
        let rate = self.discriminator.dropout;
        if !(0.0..1.0).contains(&rate) {
            return Err(CliError::Config(format!("discriminator.dropout must lie in [0, 1), got {rate}")));
        }
        self.adam().validate().map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        positive("init.std", self.init.std)?;
        if !(self.init.leaky_slope.is_finite() && self.init.leaky_slope >= 0.0) {
            return Err(CliError::Config("init.leaky_slope must be >= 0".into()));
        }
        nonzero("cond.embed_dim", self.cond.embed_dim as u64)?;
        if self.model == ModelKind::Semisup && self.semisup.labels == 0 {
            return Err(CliError::Config("semisup.labels must be >= 1".into()));
        }
        if self.model == ModelKind::Semisup && d.side * d.side < 2 {
            return Err(CliError::Config("semi-supervised training needs at least 2 components".into()));
        }
        if self.model.needs_base() && self.base.checkpoint.is_none() {
            return Err(CliError::Config(format!("model `{}` needs base.checkpoint", self.model)));
        }
        let s = &self.search;
        positive("search.lr_min", s.lr_min)?;
        positive("search.std_min", s.std_min)?;
        if s.lr_max < s.lr_min || s.std_max < s.std_min || s.beta1.is_empty() {
            return Err(CliError::Config("search ranges must be nonempty".into()));
        }
        if s.beta1.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(CliError::Config("search.beta1 values must lie in [0, 1)".into()));
        }
        nonzero("eval.coverage_samples", self.eval.coverage_samples as u64)?;
        if self.eval.interp_steps < 2 {
            return Err(CliError::Config("eval.interp_steps must be >= 2".into()));
        }
        nonzero("eval.histogram_bins", self.eval.histogram_bins as u64)?;
        positive("eval.histogram_extent", self.eval.histogram_extent)?;
        self.data.mixture()?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.optimizer.lr,
            beta1: self.optimizer.beta1,
            beta2: self.optimizer.beta2,
            eps: self.optimizer.eps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: self.adam(),
            batch_size: self.batch_size,
            discriminator_dropout: self.discriminator.dropout,
        }
    }

    pub fn init_config(&self) -> InitConfig {
        InitConfig {
            std: self.init.std,
            leaky_slope: self.init.leaky_slope,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            dim_x: self.dims.dim_x,
            dim_z: self.dims.dim_z,
            encoder_hidden: self.encoder.hidden.clone(),
            decoder_hidden: self.decoder.hidden.clone(),
            discriminator_hidden: self.discriminator.hidden.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.batch_size, 100);
        assert_eq!((c.optimizer.lr, c.optimizer.beta1, c.optimizer.beta2), (1e-4, 0.5, 0.999));
        assert_eq!((c.init.std, c.init.leaky_slope), (0.01, 0.02));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.model = ModelKind::CondAli;
        c.data.scale = Some(3.5);
        c.base.checkpoint = Some("runs/gan".into());
        c.encoder.hidden = vec![32, 16];
        let text = c.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_toml(&back.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_files_take_defaults() {
        let c = RunConfig::from_toml("model = \"gan\"\nsteps = 50\n[optimizer]\nlr = 0.001\n").unwrap();
        assert_eq!(c.model, ModelKind::Gan);
        assert_eq!(c.steps, 50);
        assert_eq!(c.optimizer.lr, 1e-3);
        assert_eq!(c.optimizer.beta1, 0.5);
        assert_eq!(c.data, DataConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("stepz = 3\n"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_toml("[data]\nsides = 3\n"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_toml("model = \"wgan\"\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let bad = |edit: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            edit(&mut c);
            assert!(matches!(c.validate(), Err(CliError::Config(_))), "{c:?}");
        };
        bad(|c| c.steps = 0);
        bad(|c| c.batch_size = 0);
        bad(|c| c.data.sigma = 0.0);
        bad(|c| c.optimizer.beta1 = 1.0);
        bad(|c| c.optimizer.lr = -1.0);
        bad(|c| c.dims.dim_x = 3);
        bad(|c| c.model = ModelKind::Posthoc);
        bad(|c| c.search.beta1.clear());
        bad(|c| c.encoder.hidden = vec![0]);
        bad(|c| c.encoder.dropout = 0.2);
        bad(|c| c.discriminator.dropout = 1.0);
    }

    #[test]
    fn default_mixture_is_standardized() {
        let m = RunConfig::default().data.mixture().unwrap();
        assert_eq!(m.len(), 25);
        let max = m.centroids().iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kinds_parse_from_cli_names() {
        assert_eq!("cond-ali".parse::<ModelKind>().unwrap(), ModelKind::CondAli);
        assert!("xyz".parse::<ModelKind>().is_err());
    }
}
