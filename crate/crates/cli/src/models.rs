//! Glue between run configurations and the core trainers: one runner per
//! model kind, and models reloaded from checkpoints.

use std::path::Path;

use ali_lab_core::ali::{AliModel, AliTrainer, Conditioning};
use ali_lab_core::baselines::{posthoc_trainer, GanModel, GanTrainer, InverseMappingTrainer, LabelledSplit, SemiSupModel, SemiSupTrainer, VaeModel, VaeTrainer};
use ali_lab_core::nn::{rng, Mlp, ModelCheckpoint, Rng};
use ali_lab_core::pipeline::{decode_mean, Encoder};
use ali_lab_core::train::{standard_prior, DatasetSampler, LatentPrior, StandardNormal};
use ali_lab_core::Tensor;
use rand::Rng as _;

use crate::config::{ModelKind, RunConfig};
use crate::data::Dataset;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

/// RNG stream of the run seed used for network initialization.
const INIT_STREAM: u64 = 1;
/// RNG stream of the run seed used to pick the labelled subset.
const LABEL_STREAM: u64 = 2;

/// One logged training step.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub step: u64,
    /// The minimized loss for models without a discriminator.
    pub ld: f64,
    pub lg: Option<f64>,
    pub mean_dq: Option<f64>,
    pub mean_dp: Option<f64>,
    pub aux: Vec<f64>,
}

impl Row {
    fn adversarial(m: ali_lab_core::StepMetrics, aux: Vec<f64>) -> Self {
        Row {
            step: m.step,
            ld: m.ld,
            lg: Some(m.lg),
            mean_dq: Some(m.mean_dq),
            mean_dp: Some(m.mean_dp),
            aux,
        }
    }

    /// `Lg` when present, else the minimized loss.
    pub fn objective(&self) -> f64 {
        self.lg.unwrap_or(self.ld)
    }
}

pub trait Runner: Send {
    fn train_step(&mut self) -> ali_lab_core::Result<Row>;
    fn model(&self) -> TrainedModel;
    /// Names of the model-specific columns in `Row::aux`.
    fn aux_columns(&self) -> &'static [&'static str];
}

struct AliRunner {
    trainer: AliTrainer,
    data: DatasetSampler,
    m: usize,
    kind: ModelKind,
}

impl Runner for AliRunner {
    fn train_step(&mut self) -> ali_lab_core::Result<Row> {
        Ok(Row::adversarial(self.trainer.train_step(&mut self.data, self.m)?, vec![]))
    }

    fn model(&self) -> TrainedModel {
        TrainedModel::Ali {
            kind: self.kind,
            model: self.trainer.model().clone(),
        }
    }

    fn aux_columns(&self) -> &'static [&'static str] {
        &[]
    }
}

struct GanRunner {
    trainer: GanTrainer,
    data: DatasetSampler,
    m: usize,
}

impl Runner for GanRunner {
    fn train_step(&mut self) -> ali_lab_core::Result<Row> {
        Ok(Row::adversarial(self.trainer.train_step(&mut self.data, self.m)?, vec![]))
    }

    fn model(&self) -> TrainedModel {
        TrainedModel::Gan(self.trainer.model().clone())
    }

    fn aux_columns(&self) -> &'static [&'static str] {
        &[]
    }
}

struct VaeRunner {
    trainer: VaeTrainer,
    data: DatasetSampler,
    m: usize,
}

impl Runner for VaeRunner {
    fn train_step(&mut self) -> ali_lab_core::Result<Row> {
        let s = self.trainer.train_step(&mut self.data, self.m)?;
        Ok(Row {
            step: s.step,
            ld: -s.elbo,
            lg: None,
            mean_dq: None,
            mean_dp: None,
            aux: vec![s.elbo, s.recon_term, s.kl_term],
        })
    }

    fn model(&self) -> TrainedModel {
        TrainedModel::Vae(self.trainer.model().clone())
    }

    fn aux_columns(&self) -> &'static [&'static str] {
        &["elbo", "recon_term", "kl_term"]
    }
}

struct InvmapRunner {
    trainer: InverseMappingTrainer,
    m: usize,
}

impl Runner for InvmapRunner {
    fn train_step(&mut self) -> ali_lab_core::Result<Row> {
        let step = self.trainer.step();
        let loss = self.trainer.train_step(self.m)?;
        Ok(Row {
            step,
            ld: loss,
            lg: None,
            mean_dq: None,
            mean_dp: None,
            aux: vec![loss],
        })
    }

    fn model(&self) -> TrainedModel {
        TrainedModel::Invmap {
            encoder: self.trainer.encoder().clone(),
            decoder: self.trainer.decoder().clone(),
        }
    }

    fn aux_columns(&self) -> &'static [&'static str] {
        &["latent_mse"]
    }
}

struct SemiSupRunner {
    trainer: SemiSupTrainer,
    split: LabelledSplit,
    m: usize,
}

impl Runner for SemiSupRunner {
    fn train_step(&mut self) -> ali_lab_core::Result<Row> {
        let s = self.trainer.train_step(&mut self.split, self.m)?;
        Ok(Row::adversarial(s.metrics, vec![s.labelled_accuracy]))
    }

    fn model(&self) -> TrainedModel {
        TrainedModel::Semisup(self.trainer.model().clone())
    }

    fn aux_columns(&self) -> &'static [&'static str] {
        &["labelled_accuracy"]
    }
}

/// Decoder of the checkpoint a post-hoc or inverse-mapping run starts from.
/// `path` is a checkpoint file or a finished run directory.
pub fn load_base_decoder(path: &Path) -> CliResult<Mlp> {
    let file = if path.is_dir() {
        let manifest = Manifest::read(path)?;
        let rel = manifest
            .last_good_checkpoint
            .ok_or_else(|| CliError::missing(path, "the base run has no checkpoint"))?;
        path.join(rel)
    } else {
        path.to_path_buf()
    };
    if !file.exists() {
        return Err(CliError::missing(&file, "train the base GAN first"));
    }
    Ok(ModelCheckpoint::load(&file)?.network("decoder")?)
}

/// Grid row of a component index.
pub fn grid_row(label: usize, side: usize) -> usize {
    label / side
}

pub fn build_runner(cfg: &RunConfig, train: &Dataset) -> CliResult<Box<dyn Runner>> {
    let arch = cfg.architecture();
    let init = cfg.init_config();
    let tc = cfg.train_config();
    let mut init_rng = rng::stream(cfg.seed, INIT_STREAM);
    let m = cfg.batch_size;
    let data = DatasetSampler::new(train.x.clone(), Some(train.labels.clone()))?;
    let runner: Box<dyn Runner> = match cfg.model {
        ModelKind::Ali => Box::new(AliRunner {
            trainer: AliTrainer::new(AliModel::new(&arch, init, &mut init_rng)?, tc, standard_prior(), cfg.seed)?,
            data,
            m,
            kind: ModelKind::Ali,
        }),
        ModelKind::CondAli => {
            let side = cfg.data.side;
            let model = AliModel::new_conditional(&arch, side, cfg.cond.embed_dim, init, &mut init_rng)?;
            Box::new(AliRunner {
                trainer: AliTrainer::new(model, tc, standard_prior(), cfg.seed)?,
                data: data.relabel(|l| grid_row(l, side))?,
                m,
                kind: ModelKind::CondAli,
            })
        }
        ModelKind::Posthoc => {
            let path = cfg.base.checkpoint.as_deref().ok_or_else(|| CliError::Config("posthoc needs base.checkpoint".into()))?;
            let decoder = load_base_decoder(path)?;
            check_base(&decoder, cfg)?;
            Box::new(AliRunner {
                trainer: posthoc_trainer(decoder, &arch, init, tc, standard_prior(), &mut init_rng, cfg.seed)?,
                data,
                m,
                kind: ModelKind::Posthoc,
            })
        }
        ModelKind::Gan => Box::new(GanRunner {
            trainer: GanTrainer::new(GanModel::new(&arch, init, &mut init_rng)?, tc, standard_prior(), cfg.seed)?,
            data,
            m,
        }),
        ModelKind::Vae => Box::new(VaeRunner {
            trainer: VaeTrainer::new(VaeModel::new(&arch, init, &mut init_rng)?, tc, cfg.seed)?,
            data,
            m,
        }),
        ModelKind::Invmap => {
            let path = cfg.base.checkpoint.as_deref().ok_or_else(|| CliError::Config("invmap needs base.checkpoint".into()))?;
            let decoder = load_base_decoder(path)?;
            check_base(&decoder, cfg)?;
            let encoder = InverseMappingTrainer::new_encoder(arch.dim_x, &arch.encoder_hidden, arch.dim_z, init, &mut init_rng)?;
            Box::new(InvmapRunner {
                trainer: InverseMappingTrainer::new(encoder, decoder, tc.adam, standard_prior(), cfg.seed)?,
                m,
            })
        }
        ModelKind::Semisup => {
            let mix_len = cfg.data.side * cfg.data.side;
            let split = LabelledSplit::balanced(train.x.clone(), &train.labels, mix_len, cfg.semisup.labels, &mut rng::stream(cfg.seed, LABEL_STREAM))?;
            let model = SemiSupModel::new(&arch, mix_len, init, &mut init_rng)?;
            Box::new(SemiSupRunner {
                trainer: SemiSupTrainer::new(model, tc, standard_prior(), cfg.seed)?,
                split,
                m,
            })
        }
    };
    Ok(runner)
}

fn check_base(decoder: &Mlp, cfg: &RunConfig) -> CliResult<()> {
    if decoder.in_dim() != cfg.dims.dim_z || decoder.out_dim() != cfg.dims.dim_x {
        return Err(CliError::Config(format!(
            "base decoder maps {} -> {}, config expects {} -> {}",
            decoder.in_dim(),
            decoder.out_dim(),
            cfg.dims.dim_z,
            cfg.dims.dim_x
        )));
    }
    Ok(())
}

/// A model as stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    /// ALI, post-hoc inference, or conditional ALI.
    Ali { kind: ModelKind, model: AliModel },
    Gan(GanModel),
    Vae(VaeModel),
    Invmap { encoder: Mlp, decoder: Mlp },
    Semisup(SemiSupModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Ali { kind, .. } => *kind,
            TrainedModel::Gan(_) => ModelKind::Gan,
            TrainedModel::Vae(_) => ModelKind::Vae,
            TrainedModel::Invmap { .. } => ModelKind::Invmap,
            TrainedModel::Semisup(_) => ModelKind::Semisup,
        }
    }

    pub fn networks(&self) -> Vec<&Mlp> {
        match self {
            TrainedModel::Ali { model, .. } => model.networks(),
            TrainedModel::Gan(g) => vec![&g.decoder, &g.discriminator],
            TrainedModel::Vae(v) => vec![&v.encoder, &v.decoder],
            TrainedModel::Invmap { encoder, decoder } => vec![encoder, decoder],
            TrainedModel::Semisup(s) => vec![&s.encoder, &s.decoder, &s.discriminator],
        }
    }

    pub fn checkpoint(&self, step: u64) -> ModelCheckpoint {
        ModelCheckpoint::new(self.kind().as_str(), step, &self.networks())
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> CliResult<Self> {
        let kind: ModelKind = ckpt.model_kind.parse()?;
        let net = |role: &str| ckpt.network(role).map_err(CliError::from);
        Ok(match kind {
            ModelKind::Ali | ModelKind::Posthoc => TrainedModel::Ali {
                kind,
                model: AliModel::from_parts(net("encoder")?, net("decoder")?, net("discriminator")?, None)?,
            },
            ModelKind::CondAli => {
                let encoder = net("encoder_embedding")?;
                let conditioning = Conditioning {
                    classes: encoder.in_dim(),
                    encoder,
                    decoder: net("decoder_embedding")?,
                    discriminator: net("discriminator_embedding")?,
                };
                TrainedModel::Ali {
                    kind,
                    model: AliModel::from_parts(net("encoder")?, net("decoder")?, net("discriminator")?, Some(conditioning))?,
                }
            }
            ModelKind::Gan => TrainedModel::Gan(GanModel::from_parts(net("decoder")?, net("discriminator")?)?),
            ModelKind::Vae => TrainedModel::Vae(VaeModel::from_parts(net("encoder")?, net("decoder")?)?),
            ModelKind::Invmap => TrainedModel::Invmap {
                encoder: net("encoder")?,
                decoder: net("decoder")?,
            },
            ModelKind::Semisup => {
                let discriminator = net("discriminator")?;
                TrainedModel::Semisup(SemiSupModel::from_parts(discriminator.out_dim() - 1, net("encoder")?, net("decoder")?, discriminator)?)
            }
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::missing(path, "train the run first"));
        }
        TrainedModel::from_checkpoint(&ModelCheckpoint::load(path)?)
    }

    pub fn decoder(&self) -> &Mlp {
        match self {
            TrainedModel::Ali { model, .. } => &model.decoder,
            TrainedModel::Gan(g) => &g.decoder,
            TrainedModel::Vae(v) => &v.decoder,
            TrainedModel::Invmap { decoder, .. } => decoder,
            TrainedModel::Semisup(s) => &s.decoder,
        }
    }

    pub fn dim_z(&self) -> usize {
        match self {
            TrainedModel::Ali { model, .. } => model.dim_z(),
            _ => self.decoder().in_dim(),
        }
    }

    /// Number of conditioning classes of a conditional model.
    pub fn condition_classes(&self) -> Option<usize> {
        match self {
            TrainedModel::Ali { model, .. } => model.conditioning.as_ref().map(|c| c.classes),
            _ => None,
        }
    }

    /// Unconditional encoder network, if the model has one.
    pub fn encoder_net(&self) -> Option<&Mlp> {
        match self {
            TrainedModel::Ali { model, .. } if model.conditioning.is_none() => Some(&model.encoder),
            TrainedModel::Vae(v) => Some(&v.encoder),
            TrainedModel::Invmap { encoder, .. } => Some(encoder),
            TrainedModel::Semisup(s) => Some(&s.encoder),
            _ => None,
        }
    }

    pub fn encoder(&self) -> Option<Encoder<'_>> {
        self.encoder_net().map(Encoder::sampling)
    }

    /// Decodes `n` prior draws. Conditional models get uniformly random labels.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> CliResult<Tensor> {
        let z = StandardNormal.sample(n, self.dim_z(), rng);
        match self {
            TrainedModel::Ali { model, .. } if model.conditioning.is_some() => {
                let k = self.condition_classes().unwrap_or(1);
                let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
                Ok(model.generate(&z, Some(&labels))?)
            }
            _ => Ok(decode_mean(self.decoder(), &z)?),
        }
    }

    /// Decodes one prior draw per label.
    pub fn sample_conditional(&self, labels: &[usize], rng: &mut Rng) -> CliResult<Tensor> {
        match self {
            TrainedModel::Ali { model, .. } if model.conditioning.is_some() => {
                let z = StandardNormal.sample(labels.len(), self.dim_z(), rng);
                Ok(model.generate(&z, Some(labels))?)
            }
            _ => Err(CliError::Config(format!("`{}` models are not conditional", self.kind()))),
        }
    }
}
