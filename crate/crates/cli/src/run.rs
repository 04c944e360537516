//! `train`: one run directory per invocation.
//!
//! Layout:
//!
//! ```text
//! <run>/config.toml          effective configuration
//! <run>/mixture.json         standardized mixture
//! <run>/metrics.csv          step,Ld,Lg,mean_Dq,mean_Dp
//! <run>/aux_metrics.csv      model-specific columns, when the model has any
//! <run>/checkpoints/step_NNNNNNN.json
//! <run>/eval/<run_id>_stepNNNNNNN_<artifact>
//! <run>/manifest.json
//! ```

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::data;
use crate::error::{CliError, CliResult};
use crate::evaluate;
use crate::fsutil;
use crate::manifest::{CheckpointEntry, Manifest, RunStatus};
use crate::models::{build_runner, Row};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const AUX_METRICS_FILE: &str = "aux_metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const EVAL_DIR: &str = "eval";
pub const METRICS_HEADER: [&str; 5] = ["step", "Ld", "Lg", "mean_Dq", "mean_Dp"];

/// Fraction of the step budget averaged into `tail_objective`.
const TAIL_FRACTION: u64 = 10;

pub fn checkpoint_name(step: u64) -> String {
    format!("{CHECKPOINT_DIR}/step_{step:07}.json")
}

pub fn run_id(dir: &Path) -> String {
    dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct MetricsLog {
    main: csv::Writer<BufWriter<File>>,
    aux: Option<csv::Writer<BufWriter<File>>>,
}

impl MetricsLog {
    fn create(dir: &Path, aux_columns: &[&str]) -> CliResult<Self> {
        let open = |name: &str| -> CliResult<csv::Writer<BufWriter<File>>> {
            let path = dir.join(name);
            let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            Ok(csv::Writer::from_writer(BufWriter::new(f)))
        };
        let mut main = open(METRICS_FILE)?;
        main.write_record(METRICS_HEADER)?;
        let aux = if aux_columns.is_empty() {
            let stale = dir.join(AUX_METRICS_FILE);
            if stale.exists() {
                std::fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
            }
            None
        } else {
            let mut w = open(AUX_METRICS_FILE)?;
            let mut header = vec!["step"];
            header.extend_from_slice(aux_columns);
            w.write_record(&header)?;
            Some(w)
        };
        Ok(MetricsLog { main, aux })
    }

    fn write(&mut self, row: &Row) -> CliResult<()> {
        self.main
            .write_record([row.step.to_string(), row.ld.to_string(), fmt(row.lg), fmt(row.mean_dq), fmt(row.mean_dp)])?;
        if let Some(w) = &mut self.aux {
            let mut rec = vec![row.step.to_string()];
            rec.extend(row.aux.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        Ok(())
    }

    fn flush(&mut self) -> CliResult<()> {
        let e = |e: std::io::Error| CliError::Failed(format!("flushing metrics: {e}"));
        self.main.flush().map_err(e)?;
        if let Some(w) = &mut self.aux {
            w.flush().map_err(e)?;
        }
        Ok(())
    }
}

/// Validates the config and writes a finished run into `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    cfg.validate()?;
    if cfg.model.needs_base() && cfg.base.checkpoint.is_none() {
        return Err(CliError::Config(format!("`{}` needs base.checkpoint (a GAN run directory or checkpoint file)", cfg.model)));
    }
    fsutil::create_dir(out)?;
    fsutil::create_dir(&out.join(CHECKPOINT_DIR))?;
    fsutil::create_dir(&out.join(EVAL_DIR))?;
    let mut effective = cfg.clone();
    effective.out = Some(out.to_path_buf());
    fsutil::write_atomic(&out.join(CONFIG_FILE), effective.to_toml().as_bytes())?;

    let (mix, train, _) = data::generate(&cfg.data)?;
    data::write_mixture(&out.join(data::MIXTURE_FILE), &mix)?;
    let mut runner = build_runner(cfg, &train)?;
    drop(train);

    let id = run_id(out);
    let mut manifest = Manifest::start(&id, &effective);
    manifest.write(out)?;
    let mut log = MetricsLog::create(out, runner.aux_columns())?;

    let save = |manifest: &mut Manifest, runner: &dyn crate::models::Runner, step: u64| -> CliResult<()> {
        let model = runner.model();
        let rel = checkpoint_name(step);
        model.checkpoint(step).save(&out.join(&rel))?;
        let report = evaluate::coverage_snapshot(out, &id, cfg, &mix, &model, step)?;
        manifest.checkpoints.push(CheckpointEntry { step, path: rel.clone() });
        manifest.last_good_checkpoint = Some(rel);
        manifest.steps_completed = step;
        manifest.final_metrics.insert("covered".into(), report.covered as f64);
        manifest.write(out)
    };
    save(&mut manifest, runner.as_ref(), 0)?;

    let tail_start = cfg.steps - (cfg.steps / TAIL_FRACTION).max(1);
    let (mut tail_sum, mut tail_n) = (0.0, 0u64);
    let mut last: Option<Row> = None;
    for s in 0..cfg.steps {
        let row = match runner.train_step() {
            Ok(r) => r,
            Err(e) => {
                let err = CliError::from(e);
                let status = if err.exit_code() == 3 { RunStatus::Aborted } else { RunStatus::Failed };
                log.flush()?;
                manifest.steps_completed = s;
                manifest.finish(status, Some(err.to_string()));
                manifest.write(out)?;
                return Err(err);
            }
        };
        if s >= tail_start {
            tail_sum += row.objective();
            tail_n += 1;
        }
        if s % cfg.log_every == 0 || s + 1 == cfg.steps {
            log.write(&row)?;
        }
        last = Some(row);
        let done = s + 1;
        if done % cfg.eval_every == 0 || done == cfg.steps {
            log.flush()?;
            save(&mut manifest, runner.as_ref(), done)?;
        }
    }
    log.flush()?;

    if let Some(row) = &last {
        let fm = &mut manifest.final_metrics;
        fm.insert("Ld".into(), row.ld);
        for (k, v) in [("Lg", row.lg), ("mean_Dq", row.mean_dq), ("mean_Dp", row.mean_dp)] {
            if let Some(v) = v {
                fm.insert(k.into(), v);
            }
        }
        for (k, v) in runner.aux_columns().iter().zip(&row.aux) {
            fm.insert((*k).into(), *v);
        }
    }
    manifest.final_metrics.insert("tail_objective".into(), tail_sum / tail_n.max(1) as f64);
    manifest.finish(RunStatus::Completed, None);
    manifest.write(out)?;
    Ok(manifest)
}

/// Output directory: `--out`, then `out` from the config, then `runs/<kind>-seed<N>`.
pub fn resolve_out(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", cfg.model, cfg.seed)))
}
