//! Pieces shared by every trainer: batch sources, the latent prior, network
//! shapes, and per-step metrics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Tensor};
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::nn::{rng, AdamConfig, BoundMlp, Rng};

/// Losses and discriminator outputs of one training step, measured on the
/// discriminator-phase batch before any parameter moves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub ld: f64,
    pub lg: f64,
    /// Mean `D` over encoder-side (data) pairs.
    pub mean_dq: f64,
    /// Mean `D` over decoder-side (generated) pairs.
    pub mean_dp: f64,
}

/// Stream of a trainer seed that draws discriminator dropout masks.
pub const DROPOUT_STREAM: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Dropout rate on the discriminator's hidden activations during updates.
    #[serde(default)]
    pub discriminator_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 100,
            discriminator_dropout: 0.0,
        }
    }
}

/// Widths of the data and latent spaces plus hidden layers of each network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub dim_x: usize,
    pub dim_z: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            dim_x: 2,
            dim_z: 2,
            encoder_hidden: vec![64, 64],
            decoder_hidden: vec![64, 64],
            discriminator_hidden: vec![64, 64],
        }
    }
}

/// `[input, hidden..., output]`.
pub fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Source of data minibatches. Randomness always comes from the caller.
pub trait DataSampler {
    fn dim(&self) -> usize;

    /// `m` rows plus their labels when the source has them.
    fn sample(&mut self, m: usize, rng: &mut Rng) -> Result<(Tensor, Option<Vec<usize>>)>;
}

/// Uniform draws with replacement from a fixed dataset.
#[derive(Clone, Debug)]
pub struct DatasetSampler {
    data: Tensor,
    labels: Option<Vec<usize>>,
}

impl DatasetSampler {
    pub fn new(data: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        if !data.is_matrix() {
            return Err(Error::contract("dataset must be a matrix"));
        }
        if labels.as_ref().is_some_and(|l| l.len() != data.rows()) {
            return Err(Error::contract("dataset labels must match its row count"));
        }
        Ok(DatasetSampler { data, labels })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Replaces the labels, e.g. to condition on a coarser class.
    pub fn relabel(&self, f: impl Fn(usize) -> usize) -> Result<Self> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::contract("dataset has no labels to map"))?;
        DatasetSampler::new(self.data.clone(), Some(labels.iter().map(|&l| f(l)).collect()))
    }
}

impl DataSampler for DatasetSampler {
    fn dim(&self) -> usize {
        self.data.cols()
    }

    fn sample(&mut self, m: usize, rng: &mut Rng) -> Result<(Tensor, Option<Vec<usize>>)> {
        use rand::Rng as _;
        let n = self.data.rows();
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
        let labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        Ok((self.data.select_rows(&idx), labels))
    }
}

/// Fresh draws from a mixture on every call.
#[derive(Clone, Debug)]
pub struct MixtureSampler {
    pub mixture: GaussianMixture,
}

impl DataSampler for MixtureSampler {
    fn dim(&self) -> usize {
        2
    }

    fn sample(&mut self, m: usize, rng: &mut Rng) -> Result<(Tensor, Option<Vec<usize>>)> {
        let (x, l) = self.mixture.sample(m, rng)?;
        Ok((x, Some(l)))
    }
}

/// Distribution of decoder-side latent codes.
pub trait LatentPrior: Send + Sync {
    fn sample(&self, m: usize, dim: usize, rng: &mut Rng) -> Tensor;
}

/// `p(z) = N(0, I)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct StandardNormal;

impl LatentPrior for StandardNormal {
    fn sample(&self, m: usize, dim: usize, rng: &mut Rng) -> Tensor {
        rng::standard_normal(&[m, dim], rng)
    }
}

pub type SharedPrior = Arc<dyn LatentPrior>;

pub fn standard_prior() -> SharedPrior {
    Arc::new(StandardNormal)
}

/// Gradients of the given bound networks, flattened in parameter order.
pub(crate) fn collect_grads(grads: &Gradients, tape: &Tape, nets: &[&BoundMlp]) -> Vec<Tensor> {
    nets.iter()
        .flat_map(|b| b.vars().map(|v| grads.wrt(tape, v)).collect::<Vec<_>>())
        .collect()
}

pub(crate) fn check_batch(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::contract("batch size M must be >= 1"));
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, step: u64, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} at step {step}: {values:?}")))
    }
}
