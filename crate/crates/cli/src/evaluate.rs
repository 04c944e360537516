//! `eval`: metric reports for one checkpoint of a run.
//!
//! Every artifact is written to `<run>/eval/<run_id>_stepNNNNNNN_<name>`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ali_lab_core::eval::{invertibility_diagnostic, latent_interpolate, latent_occupancy, mode_coverage, reconstruct, ModeCoverageReport};
use ali_lab_core::nn::rng;
use ali_lab_core::train::StandardNormal;
use ali_lab_core::{GaussianMixture, Tensor};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ModelKind, RunConfig};
use crate::data::{self, Dataset};
use crate::error::{CliError, CliResult};
use crate::fsutil;
use crate::manifest::Manifest;
use crate::models::{grid_row, TrainedModel};
use crate::run::{self, EVAL_DIR};

/// Rows of generated samples, codes and pairs kept in CSV for plotting.
pub const PLOT_ROWS: usize = 2000;
pub const RECON_PAIR_ROWS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    Coverage,
    Recon,
    Latent,
    Interp,
    Invert,
    Cond,
    Classify,
    All,
}

impl Which {
    const EACH: [Which; 7] = [
        Which::Coverage,
        Which::Recon,
        Which::Latent,
        Which::Interp,
        Which::Invert,
        Which::Cond,
        Which::Classify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Which::Coverage => "coverage",
            Which::Recon => "recon",
            Which::Latent => "latent",
            Which::Interp => "interp",
            Which::Invert => "invert",
            Which::Cond => "cond",
            Which::Classify => "classify",
            Which::All => "all",
        }
    }

    fn stream(self) -> u64 {
        100 + Which::EACH.iter().position(|w| *w == self).unwrap_or(0) as u64
    }

    fn applies_to(self, model: &TrainedModel) -> bool {
        match self {
            Which::Coverage | Which::All => true,
            Which::Recon | Which::Latent | Which::Interp | Which::Invert => model.encoder().is_some(),
            Which::Cond => model.condition_classes().is_some(),
            Which::Classify => model.kind() == ModelKind::Semisup,
        }
    }
}

pub fn artifact_path(dir: &Path, run_id: &str, step: u64, name: &str) -> PathBuf {
    dir.join(EVAL_DIR).join(format!("{run_id}_step{step:07}_{name}"))
}

fn write_table(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    fsutil::write_atomic(path, &bytes)
}

fn rows_of(t: &Tensor, limit: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..t.rows().min(limit)).map(move |i| t.row(i).to_vec())
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Failed(e.to_string()))
}

/// Coverage of fresh model samples; writes the JSON report, per-component
/// counts, and the first samples.
pub fn coverage_snapshot(
    dir: &Path,
    run_id: &str,
    cfg: &RunConfig,
    mix: &GaussianMixture,
    model: &TrainedModel,
    step: u64,
) -> CliResult<ModeCoverageReport> {
    let mut r = rng::stream(cfg.seed, Which::Coverage.stream());
    let samples = model.sample(cfg.eval.coverage_samples, &mut r)?;
    let report = mode_coverage(mix, &samples)?;
    let path = |name: &str| artifact_path(dir, run_id, step, name);
    fsutil::write_json(&path("coverage.json"), &report)?;
    write_table(
        &path("coverage_counts.csv"),
        &["component", "count"],
        report.counts.iter().enumerate().map(|(k, &c)| vec![k as f64, c as f64]),
    )?;
    write_table(&path("samples.csv"), &["x0", "x1"], rows_of(&samples, PLOT_ROWS))?;
    Ok(report)
}

/// A checkpoint with everything needed to evaluate it.
pub struct EvalTarget {
    pub dir: PathBuf,
    pub run_id: String,
    pub cfg: RunConfig,
    pub step: u64,
    pub model: TrainedModel,
    pub mix: GaussianMixture,
}

impl EvalTarget {
    /// Loads the checkpoint at `step`, or the last good one.
    pub fn open(dir: &Path, step: Option<u64>) -> CliResult<Self> {
        let manifest = Manifest::read(dir)?;
        let path = manifest.checkpoint_for(dir, step)?;
        let model = TrainedModel::load(&path)?;
        let step = step.unwrap_or_else(|| manifest.checkpoints.iter().find(|c| dir.join(&c.path) == path).map_or(0, |c| c.step));
        let mix = data::read_mixture(&dir.join(data::MIXTURE_FILE))?;
        Ok(EvalTarget {
            dir: dir.to_path_buf(),
            run_id: manifest.run_id.clone(),
            cfg: manifest.config,
            step,
            model,
            mix,
        })
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        artifact_path(&self.dir, &self.run_id, self.step, name)
    }

    fn heldout(&self) -> CliResult<Dataset> {
        Ok(data::generate(&self.cfg.data)?.2)
    }

    fn rng(&self, which: Which) -> rng::Rng {
        rng::stream(self.cfg.seed, which.stream())
    }

    pub fn run(&self, which: Which) -> CliResult<Value> {
        if !which.applies_to(&self.model) {
            return Err(CliError::Config(format!("`{}` does not apply to `{}` runs", which.name(), self.model.kind())));
        }
        match which {
            Which::Coverage => to_value(&coverage_snapshot(&self.dir, &self.run_id, &self.cfg, &self.mix, &self.model, self.step)?),
            Which::Recon => self.recon(),
            Which::Latent => self.latent(),
            Which::Interp => self.interp(),
            Which::Invert => self.invert(),
            Which::Cond => self.cond(),
            Which::Classify => self.classify(),
            Which::All => {
                let mut out = BTreeMap::new();
                for w in Which::EACH.into_iter().filter(|w| w.applies_to(&self.model)) {
                    out.insert(w.name().to_string(), self.run(w)?);
                }
                to_value(&out)
            }
        }
    }

    fn encoder(&self) -> ali_lab_core::pipeline::Encoder<'_> {
        self.model.encoder().expect("checked by applies_to")
    }

    fn recon(&self) -> CliResult<Value> {
        let held = self.heldout()?;
        let rec = reconstruct(self.encoder(), self.model.decoder(), &held.x, &mut self.rng(Which::Recon))?;
        let report = json!({ "n": held.x.rows(), "mse": rec.mse });
        fsutil::write_json(&self.artifact("recon.json"), &report)?;
        let pairs = rows_of(&held.x, RECON_PAIR_ROWS).zip(rows_of(&rec.x_hat, RECON_PAIR_ROWS)).map(|(mut a, b)| {
            a.extend(b);
            a
        });
        write_table(&self.artifact("recon_pairs.csv"), &["x0", "x1", "xh0", "xh1"], pairs)?;
        Ok(report)
    }

    fn latent(&self) -> CliResult<Value> {
        let held = self.heldout()?;
        let e = &self.cfg.eval;
        let mut r = self.rng(Which::Latent);
        let occ = latent_occupancy(self.encoder(), &held.x, &mut r, e.histogram_extent, e.histogram_bins)?;
        fsutil::write_json(&self.artifact("latent.json"), &occ)?;
        let z = self.encoder().encode(&held.x.select_rows(&(0..held.x.rows().min(PLOT_ROWS)).collect::<Vec<_>>()), &mut r)?;
        let header: Vec<String> = (0..z.cols()).map(|i| format!("z{i}")).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table(&self.artifact("latent_points.csv"), &header, rows_of(&z, PLOT_ROWS))?;
        to_value(&occ)
    }

    fn interp(&self) -> CliResult<Value> {
        let held = self.heldout()?;
        let side = self.cfg.data.side;
        let k = side * side;
        let ends = [(0, k - 1), (side - 1, k - side), (0, side - 1), (0, k - side)];
        let first = |label: usize| held.labels.iter().position(|&l| l == label);
        let net = self.model.encoder_net().expect("checked by applies_to");
        let mut pairs = Vec::new();
        let mut rows = Vec::new();
        for (i, (a, b)) in ends.into_iter().enumerate().filter(|(_, (a, b))| a != b) {
            let (Some(ia), Some(ib)) = (first(a), first(b)) else { continue };
            let path = latent_interpolate(net, self.model.decoder(), held.x.row(ia), held.x.row(ib), self.cfg.eval.interp_steps)?;
            let points: Vec<Vec<f64>> = rows_of(&path, usize::MAX).collect();
            for (t, p) in points.iter().enumerate() {
                rows.push(vec![i as f64, t as f64, p[0], p[1]]);
            }
            pairs.push(json!({
                "from_label": a,
                "to_label": b,
                "from": held.x.row(ia),
                "to": held.x.row(ib),
                "path": points,
            }));
        }
        let report = json!({ "steps": self.cfg.eval.interp_steps, "pairs": pairs });
        fsutil::write_json(&self.artifact("interp.json"), &report)?;
        write_table(&self.artifact("interp.csv"), &["pair", "t", "x0", "x1"], rows.into_iter())?;
        Ok(report)
    }

    fn invert(&self) -> CliResult<Value> {
        let held = self.heldout()?;
        let rep = invertibility_diagnostic(self.encoder(), self.model.decoder(), &held.x, &StandardNormal, &mut self.rng(Which::Invert))?;
        fsutil::write_json(&self.artifact("invert.json"), &rep)?;
        to_value(&rep)
    }

    fn cond(&self) -> CliResult<Value> {
        let side = self.cfg.data.side;
        let per_row = (self.cfg.eval.coverage_samples / side).max(1);
        let labels: Vec<usize> = (0..side).flat_map(|r| std::iter::repeat_n(r, per_row)).collect();
        let samples = self.model.sample_conditional(&labels, &mut self.rng(Which::Cond))?;
        let assigned = self.mix.assign_all(&GaussianMixture::points(&samples)?);
        let mut hits = vec![0usize; side];
        for (&want, &k) in labels.iter().zip(&assigned) {
            if grid_row(k, side) == want {
                hits[want] += 1;
            }
        }
        let fractions: Vec<f64> = hits.iter().map(|&h| h as f64 / per_row as f64).collect();
        let overall = hits.iter().sum::<usize>() as f64 / labels.len() as f64;
        let report = json!({ "n_per_row": per_row, "row_accuracy": fractions, "overall": overall });
        fsutil::write_json(&self.artifact("cond.json"), &report)?;
        write_table(&self.artifact("cond_samples.csv"), &["x0", "x1", "row"], (0..samples.rows()).map(|i| vec![samples.at(i, 0), samples.at(i, 1), labels[i] as f64]))?;
        Ok(report)
    }

    fn classify(&self) -> CliResult<Value> {
        let TrainedModel::Semisup(model) = &self.model else {
            unreachable!("checked by applies_to")
        };
        let held = self.heldout()?;
        let pred = model.classify(&held.x)?;
        let correct = pred.iter().zip(&held.labels).filter(|(a, b)| a == b).count();
        let report = json!({
            "n": pred.len(),
            "labels_used": self.cfg.semisup.labels,
            "accuracy": correct as f64 / pred.len() as f64,
        });
        fsutil::write_json(&self.artifact("classify.json"), &report)?;
        Ok(report)
    }
}

/// Runs `which` on each run directory and prints the reports as JSON.
pub fn cmd_eval(dirs: &[PathBuf], which: Which, step: Option<u64>) -> CliResult<BTreeMap<String, Value>> {
    if dirs.is_empty() {
        return Err(CliError::Config("eval needs at least one run directory".into()));
    }
    let mut out = BTreeMap::new();
    for dir in dirs {
        let target = EvalTarget::open(dir, step)?;
        let mut entry = json!({ "step": target.step, "model": target.model.kind() });
        let report = target.run(which)?;
        match (which, report) {
            (Which::All, Value::Object(each)) => entry.as_object_mut().expect("object").extend(each),
            (_, report) => {
                entry[which.name()] = report;
            }
        }
        out.insert(run::run_id(dir), entry);
    }
    Ok(out)
}
