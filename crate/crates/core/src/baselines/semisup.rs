//! Joint discriminator with `K + 1` outputs: `K` real classes for encoder
//! pairs and one extra class for decoder pairs.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{rng, AdamState, BoundMlp, Head, InitConfig, Mlp, Rng};
use crate::pipeline::{encode_on_tape, Encoder};
use crate::train::{check_batch, check_finite, collect_grads, layer_sizes, Architecture, DataSampler, DatasetSampler, SharedPrior, StepMetrics, TrainConfig, DROPOUT_STREAM};

#[derive(Clone, Debug, PartialEq)]
pub struct SemiSupModel {
    pub classes: usize,
    pub encoder: Mlp,
    pub decoder: Mlp,
    /// `dim_x + dim_z → K + 1` logits, the last one for decoder pairs.
    pub discriminator: Mlp,
}

impl SemiSupModel {
    pub fn new(arch: &Architecture, classes: usize, init: InitConfig, rng: &mut Rng) -> Result<Self> {
        let (dx, dz) = (arch.dim_x, arch.dim_z);
        let encoder = Mlp::init("encoder", &layer_sizes(dx, &arch.encoder_hidden, 2 * dz), Head::SplitGaussian, init, rng)?;
        let decoder = Mlp::init("decoder", &layer_sizes(dz, &arch.decoder_hidden, dx), Head::Linear, init, rng)?;
        let discriminator = Mlp::init(
            "discriminator",
            &layer_sizes(dx + dz, &arch.discriminator_hidden, classes + 1),
            Head::Linear,
            init,
            rng,
        )?;
        SemiSupModel::from_parts(classes, encoder, decoder, discriminator)
    }

    pub fn from_parts(classes: usize, encoder: Mlp, decoder: Mlp, discriminator: Mlp) -> Result<Self> {
        if classes < 2 {
            return Err(Error::contract("semi-supervised model needs K >= 2 classes"));
        }
        let (dx, dz) = (decoder.out_dim(), decoder.in_dim());
        let ok = encoder.head() == Head::SplitGaussian
            && encoder.in_dim() == dx
            && encoder.out_dim() == 2 * dz
            && discriminator.in_dim() == dx + dz
            && discriminator.out_dim() == classes + 1;
        if !ok {
            return Err(Error::contract(format!(
                "inconsistent semi-supervised widths: encoder {:?}, decoder {:?}, discriminator {:?}, K = {classes}",
                encoder.sizes(),
                decoder.sizes(),
                discriminator.sizes()
            )));
        }
        Ok(SemiSupModel {
            classes,
            encoder,
            decoder,
            discriminator,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.decoder.out_dim()
    }

    pub fn dim_z(&self) -> usize {
        self.decoder.in_dim()
    }

    /// Softmax over all `K + 1` classes for pairs `(x, z)`.
    pub fn probabilities(&self, x: &Tensor, z: &Tensor) -> Result<Tensor> {
        let mut l = self.discriminator.predict(&x.hcat(z)?)?;
        let c = l.cols();
        for row in l.data_mut().chunks_mut(c) {
            let lse = kernels::logsumexp(row);
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        Ok(l)
    }

    /// Class in `0..K` for each row of `x`, from the real-class logits of
    /// `D(x, μ(x))`.
    pub fn classify(&self, x: &Tensor) -> Result<Vec<usize>> {
        let z = Encoder::mean_only(&self.encoder).mean(x)?;
        let l = self.discriminator.predict(&x.hcat(&z)?)?;
        Ok((0..l.rows()).map(|i| argmax(&l.row(i)[..self.classes])).collect())
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// A dataset where only a few rows keep their labels.
#[derive(Clone, Debug)]
pub struct LabelledSplit {
    pub labelled: DatasetSampler,
    pub unlabelled: DatasetSampler,
}

impl LabelledSplit {
    /// Keeps `n_labels` labels spread as evenly as possible over the
    /// `classes` classes, chosen at random within each class.
    pub fn balanced(data: Tensor, labels: &[usize], classes: usize, n_labels: usize, rng: &mut Rng) -> Result<Self> {
        if n_labels == 0 {
            return Err(Error::contract("semi-supervised training needs at least one label"));
        }
        if labels.len() != data.rows() {
            return Err(Error::contract("labels must match the data rows"));
        }
        let mut by_class = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class
                .get_mut(l)
                .ok_or_else(|| Error::contract(format!("label {l} out of range for {classes} classes")))?
                .push(i);
        }
        let mut keep = Vec::with_capacity(n_labels);
        for (c, rows) in by_class.iter_mut().enumerate() {
            let quota = n_labels / classes + usize::from(c < n_labels % classes);
            rows.shuffle(rng);
            keep.extend(rows.iter().take(quota));
        }
        if keep.is_empty() {
            return Err(Error::contract("no labelled rows selected"));
        }
        keep.sort_unstable();
        let kept_labels = keep.iter().map(|&i| labels[i]).collect();
        Ok(LabelledSplit {
            labelled: DatasetSampler::new(data.select_rows(&keep), Some(kept_labels))?,
            unlabelled: DatasetSampler::new(data, None)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiSupStep {
    /// `mean_dq` and `mean_dp` are the mean real-class mass on unlabelled
    /// encoder pairs and on decoder pairs.
    pub metrics: StepMetrics,
    /// Accuracy on the labelled minibatch before the update.
    pub labelled_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemiSupBatch {
    pub x_unlabelled: Tensor,
    pub noise_unlabelled: Tensor,
    pub x_labelled: Tensor,
    pub labels: Vec<usize>,
    pub noise_labelled: Tensor,
    pub z: Tensor,
}

pub struct SemiSupTrainer {
    model: SemiSupModel,
    opt_g: AdamState,
    opt_d: AdamState,
    prior: SharedPrior,
    rng: Rng,
    dropout: f64,
    dropout_rng: Rng,
    step: u64,
}

struct Forward {
    tape: Tape,
    encoder: BoundMlp,
    decoder: BoundMlp,
    discriminator: BoundMlp,
    q_unlabelled: Var,
    q_labelled: Var,
    p: Var,
}

/// Mean cross-entropy to the event that the class lies in `lo..hi`.
fn mean_ce_range(tape: &mut Tape, logits: Var, lo: usize, hi: usize) -> Result<Var> {
    let all = tape.logsumexp_last_axis(logits);
    let part = tape.slice_last_axis(logits, lo, hi)?;
    let part = tape.logsumexp_last_axis(part);
    let d = tape.sub(all, part)?;
    Ok(tape.mean(d))
}

/// Mean cross-entropy to individual classes given as one-hot rows.
fn mean_ce_onehot(tape: &mut Tape, logits: Var, onehot: Var) -> Result<Var> {
    let m = tape.value(logits).rows() as f64;
    let all = tape.logsumexp_last_axis(logits);
    let a = tape.mean(all);
    let picked = tape.mul(logits, onehot)?;
    let s = tape.sum(picked);
    let s = tape.scale(s, -1.0 / m);
    tape.add(a, s)
}

fn mean_real_mass(logits: &Tensor, classes: usize) -> f64 {
    let c = logits.cols();
    let total: f64 = logits
        .data()
        .chunks(c)
        .map(|row| (kernels::logsumexp(&row[..classes]) - kernels::logsumexp(row)).exp())
        .sum();
    total / logits.rows() as f64
}

impl SemiSupTrainer {
    pub fn new(model: SemiSupModel, config: TrainConfig, prior: SharedPrior, seed: u64) -> Result<Self> {
        check_batch(config.batch_size)?;
        Ok(SemiSupTrainer {
            opt_g: AdamState::for_nets(config.adam, &[&model.encoder, &model.decoder])?,
            opt_d: AdamState::for_nets(config.adam, &[&model.discriminator])?,
            model,
            prior,
            rng: rng::seeded(seed),
            dropout: config.discriminator_dropout,
            dropout_rng: rng::stream(seed, DROPOUT_STREAM),
            step: 0,
        })
    }

    pub fn model(&self) -> &SemiSupModel {
        &self.model
    }

    pub fn into_model(self) -> SemiSupModel {
        self.model
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn draw_batch(&mut self, split: &mut LabelledSplit, m: usize) -> Result<SemiSupBatch> {
        check_batch(m)?;
        let dz = self.model.dim_z();
        let (x_unlabelled, _) = split.unlabelled.sample(m, &mut self.rng)?;
        let (x_labelled, labels) = split.labelled.sample(m, &mut self.rng)?;
        let labels = labels.ok_or_else(|| Error::contract("labelled split has no labels"))?;
        let noise_unlabelled = rng::standard_normal(&[m, dz], &mut self.rng);
        let noise_labelled = rng::standard_normal(&[m, dz], &mut self.rng);
        let z = self.prior.sample(m, dz, &mut self.rng);
        Ok(SemiSupBatch {
            x_unlabelled,
            noise_unlabelled,
            x_labelled,
            labels,
            noise_labelled,
            z,
        })
    }

    fn forward(m: &SemiSupModel, b: &SemiSupBatch, generator: bool, rate: f64, rng: &mut Rng) -> Result<Forward> {
        let mut tape = Tape::new();
        let encoder = m.encoder.bind(&mut tape, generator);
        let decoder = m.decoder.bind(&mut tape, generator);
        let discriminator = m.discriminator.bind(&mut tape, !generator);
        let pair = |tape: &mut Tape, x: &Tensor, noise: &Tensor, rng: &mut Rng| -> Result<Var> {
            let xv = tape.constant(x.clone());
            let ev = tape.constant(noise.clone());
            let z = encode_on_tape(&m.encoder, &encoder, tape, xv, ev)?;
            let xz = tape.concat_last_axis(xv, z)?;
            m.discriminator.forward_dropout(&discriminator, tape, xz, rate, rng)
        };
        let q_unlabelled = pair(&mut tape, &b.x_unlabelled, &b.noise_unlabelled, rng)?;
        let q_labelled = pair(&mut tape, &b.x_labelled, &b.noise_labelled, rng)?;
        let zv = tape.constant(b.z.clone());
        let x_tilde = m.decoder.forward(&decoder, &mut tape, zv)?;
        let xz = tape.concat_last_axis(x_tilde, zv)?;
        let p = m.discriminator.forward_dropout(&discriminator, &mut tape, xz, rate, rng)?;
        Ok(Forward {
            tape,
            encoder,
            decoder,
            discriminator,
            q_unlabelled,
            q_labelled,
            p,
        })
    }

    fn losses(&self, f: &mut Forward, b: &SemiSupBatch) -> Result<(Var, Var)> {
        let k = self.model.classes;
        if let Some(&bad) = b.labels.iter().find(|&&l| l >= k) {
            return Err(Error::contract(format!("label {bad} out of range for {k} classes")));
        }
        let mut onehot = Tensor::zeros(&[b.labels.len(), k + 1]);
        for (i, &l) in b.labels.iter().enumerate() {
            onehot.data_mut()[i * (k + 1) + l] = 1.0;
        }
        let t = &mut f.tape;
        let oh = t.constant(onehot);
        let sup = mean_ce_onehot(t, f.q_labelled, oh)?;
        let real = mean_ce_range(t, f.q_unlabelled, 0, k)?;
        let fake = mean_ce_range(t, f.p, k, k + 1)?;
        let a = t.add(sup, real)?;
        let ld = t.add(a, fake)?;
        let q_fake = mean_ce_range(t, f.q_unlabelled, k, k + 1)?;
        let p_real = mean_ce_range(t, f.p, 0, k)?;
        let lg = t.add(q_fake, p_real)?;
        Ok((ld, lg))
    }

    fn report(&self, f: &Forward, b: &SemiSupBatch, ld: Var, lg: Var) -> Result<SemiSupStep> {
        let k = self.model.classes;
        let ql = f.tape.value(f.q_labelled);
        let hits = (0..ql.rows()).filter(|&i| argmax(&ql.row(i)[..k]) == b.labels[i]).count();
        let metrics = StepMetrics {
            step: self.step,
            ld: f.tape.value(ld).item(),
            lg: f.tape.value(lg).item(),
            mean_dq: mean_real_mass(f.tape.value(f.q_unlabelled), k),
            mean_dp: mean_real_mass(f.tape.value(f.p), k),
        };
        check_finite("losses", self.step, &[metrics.ld, metrics.lg])?;
        Ok(SemiSupStep {
            metrics,
            labelled_accuracy: hits as f64 / b.labels.len() as f64,
        })
    }

    pub fn discriminator_update(&mut self, b: &SemiSupBatch) -> Result<SemiSupStep> {
        let mut f = SemiSupTrainer::forward(&self.model, b, false, self.dropout, &mut self.dropout_rng)?;
        let (ld, lg) = self.losses(&mut f, b)?;
        let out = self.report(&f, b, ld, lg)?;
        let grads = f.tape.backward(ld)?;
        let g = collect_grads(&grads, &f.tape, &[&f.discriminator]);
        self.opt_d.step(&mut [&mut self.model.discriminator], &g)?;
        Ok(out)
    }

    pub fn generator_update(&mut self, b: &SemiSupBatch) -> Result<f64> {
        let mut f = SemiSupTrainer::forward(&self.model, b, true, self.dropout, &mut self.dropout_rng)?;
        let (_, lg) = self.losses(&mut f, b)?;
        let value = f.tape.value(lg).item();
        check_finite("generator loss", self.step, &[value])?;
        let grads = f.tape.backward(lg)?;
        let g = collect_grads(&grads, &f.tape, &[&f.encoder, &f.decoder]);
        self.opt_g.step(&mut [&mut self.model.encoder, &mut self.model.decoder], &g)?;
        Ok(value)
    }

    pub fn train_step(&mut self, split: &mut LabelledSplit, m: usize) -> Result<SemiSupStep> {
        let b = self.draw_batch(split, m)?;
        let out = self.discriminator_update(&b)?;
        let b = self.draw_batch(split, m)?;
        self.generator_update(&b)?;
        self.step += 1;
        Ok(out)
    }
}
