//! `search`: random hyperparameter sweep with a coverage leaderboard.
//!
//! Run `i` draws its learning rate (log-uniform), β1 (uniform over the
//! configured set), init std (log-uniform) and training seed from stream `i`
//! of the search seed, so sweeps of different model kinds with the same seed
//! try identical settings.

use std::path::{Path, PathBuf};

use ali_lab_core::eval::CoverageSummary;
use ali_lab_core::nn::rng;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::fsutil;
use crate::run::cmd_train;

pub const LEADERBOARD_JSON: &str = "leaderboard.json";
pub const LEADERBOARD_CSV: &str = "leaderboard.csv";
pub const LEADERBOARD_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lr: f64,
    pub beta1: f64,
    pub init_std: f64,
    pub seed: u64,
}

fn log_uniform(r: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        r.random_range(lo.ln()..hi.ln()).exp()
    }
}

pub fn sample_hyperparameters(cfg: &RunConfig, index: usize) -> Hyperparameters {
    let s = &cfg.search;
    let mut r = rng::stream(cfg.seed, index as u64);
    let lr = log_uniform(&mut r, s.lr_min, s.lr_max);
    let beta1 = s.beta1[r.random_range(0..s.beta1.len())];
    let init_std = log_uniform(&mut r, s.std_min, s.std_max);
    let seed = r.random::<u32>() as u64;
    Hyperparameters { lr, beta1, init_std, seed }
}

pub fn run_config(cfg: &RunConfig, hp: &Hyperparameters) -> RunConfig {
    let mut c = cfg.clone();
    c.optimizer.lr = hp.lr;
    c.optimizer.beta1 = hp.beta1;
    c.init.std = hp.init_std;
    c.seed = hp.seed;
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub run: usize,
    pub run_dir: String,
    #[serde(flatten)]
    pub hyperparameters: Hyperparameters,
    pub completed: bool,
    pub covered: Option<usize>,
    /// Mean generator-side loss over the last tenth of training.
    pub tail_objective: Option<f64>,
    pub best: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub search_seed: u64,
    pub runs: usize,
    /// Coverage statistics over completed runs.
    pub summary: Option<CoverageSummary>,
    pub best_run_dir: Option<String>,
    pub entries: Vec<LeaderboardEntry>,
}

impl Leaderboard {
    pub fn read(dir: &Path) -> CliResult<Self> {
        fsutil::read_json(&dir.join(LEADERBOARD_JSON), "run `ali-lab search` first")
    }

    pub fn best(&self) -> Option<&LeaderboardEntry> {
        self.entries.iter().find(|e| e.best)
    }
}

/// Covered modes descending, then lower tail objective, then run index.
/// Failed runs go last.
fn rank(entries: &mut [LeaderboardEntry]) {
    entries.sort_by(|a, b| {
        b.completed
            .cmp(&a.completed)
            .then(b.covered.cmp(&a.covered))
            .then(a.tail_objective.unwrap_or(f64::INFINITY).total_cmp(&b.tail_objective.unwrap_or(f64::INFINITY)))
            .then(a.run.cmp(&b.run))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
        e.best = i == 0 && e.completed;
    }
}

pub fn run_dir_name(index: usize) -> String {
    format!("run_{index:02}")
}

pub fn cmd_search(cfg: &RunConfig, out: &Path, runs: usize) -> CliResult<Leaderboard> {
    if runs == 0 {
        return Err(CliError::Config("search needs --runs >= 1".into()));
    }
    cfg.validate()?;
    fsutil::create_dir(out)?;
    let results: Vec<(usize, Hyperparameters, PathBuf, CliResult<crate::manifest::Manifest>)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let hp = sample_hyperparameters(cfg, i);
            let dir = out.join(run_dir_name(i));
            let res = cmd_train(&run_config(cfg, &hp), &dir);
            (i, hp, dir, res)
        })
        .collect();

    let mut entries: Vec<LeaderboardEntry> = results
        .into_iter()
        .map(|(run, hp, dir, res)| {
            let (completed, covered, tail, error) = match res {
                Ok(m) => (true, m.metric("covered").map(|c| c as usize), m.metric("tail_objective"), None),
                Err(e) => (false, None, None, Some(e.to_string())),
            };
            LeaderboardEntry {
                rank: 0,
                run,
                run_dir: dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                hyperparameters: hp,
                completed,
                covered,
                tail_objective: tail,
                best: false,
                error,
            }
        })
        .collect();
    rank(&mut entries);
    let covered: Vec<usize> = entries.iter().filter_map(|e| e.covered).collect();
    let summary = if covered.is_empty() { None } else { Some(CoverageSummary::from_covered(&covered)?) };
    let board = Leaderboard {
        format_version: LEADERBOARD_FORMAT_VERSION,
        model_kind: cfg.model,
        search_seed: cfg.seed,
        runs,
        summary,
        best_run_dir: entries.iter().find(|e| e.best).map(|e| e.run_dir.clone()),
        entries,
    };
    fsutil::write_json(&out.join(LEADERBOARD_JSON), &board)?;
    write_csv(&out.join(LEADERBOARD_CSV), &board)?;
    if board.best_run_dir.is_none() {
        let first = board.entries.first().and_then(|e| e.error.clone()).unwrap_or_default();
        return Err(CliError::Failed(format!("all {runs} runs failed; first error: {first}")));
    }
    Ok(board)
}

fn write_csv(path: &Path, board: &Leaderboard) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "run_dir", "lr", "beta1", "init_std", "seed", "completed", "covered", "tail_objective", "best"])?;
    for e in &board.entries {
        let h = &e.hyperparameters;
        w.write_record([
            e.rank.to_string(),
            e.run_dir.clone(),
            h.lr.to_string(),
            h.beta1.to_string(),
            h.init_std.to_string(),
            h.seed.to_string(),
            e.completed.to_string(),
            e.covered.map(|c| c.to_string()).unwrap_or_default(),
            e.tail_objective.map(|c| c.to_string()).unwrap_or_default(),
            e.best.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    fsutil::write_atomic(path, &bytes)
}
