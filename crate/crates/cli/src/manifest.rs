//! Per-run manifest, `manifest.json` in the run directory.
//!
//! Schema (version 1):
//!
//! | field | type | meaning |
//! |---|---|---|
//! | `format_version` | int | always 1 |
//! | `run_id` | string | run directory name |
//! | `model_kind` | string | `ali`, `gan`, `vae`, `invmap`, `posthoc`, `cond-ali` or `semisup` |
//! | `status` | string | `running`, `completed`, `aborted` or `failed` |
//! | `partial` | bool | true until the run finishes cleanly |
//! | `artifact_version` | string | version of the tool that wrote the run |
//! | `started_at`, `finished_at` | RFC 3339 | wall-clock timestamps |
//! | `config` | object | effective configuration |
//! | `steps_completed` | int | training steps finished |
//! | `final_metrics` | map string to number | last logged values and evaluation results |
//! | `checkpoints` | list of `{step, path}` | checkpoint files relative to the run directory |
//! | `last_good_checkpoint` | string or null | newest checkpoint with finite parameters |
//! | `error` | string or null | failure message |

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::fsutil;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    /// Stopped by a non-finite loss or parameter.
    Aborted,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointEntry {
    pub step: u64,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub run_id: String,
    pub model_kind: ModelKind,
    pub status: RunStatus,
    pub partial: bool,
    pub artifact_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub config: RunConfig,
    pub steps_completed: u64,
    pub final_metrics: BTreeMap<String, f64>,
    pub checkpoints: Vec<CheckpointEntry>,
    pub last_good_checkpoint: Option<String>,
    pub error: Option<String>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl Manifest {
    pub fn start(run_id: &str, config: &RunConfig) -> Self {
        Manifest {
            format_version: MANIFEST_FORMAT_VERSION,
            run_id: run_id.to_string(),
            model_kind: config.model,
            status: RunStatus::Running,
            partial: true,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: None,
            config: config.clone(),
            steps_completed: 0,
            final_metrics: BTreeMap::new(),
            checkpoints: Vec::new(),
            last_good_checkpoint: None,
            error: None,
        }
    }

    pub fn finish(&mut self, status: RunStatus, error: Option<String>) {
        self.status = status;
        self.partial = status != RunStatus::Completed;
        self.finished_at = Some(now());
        self.error = error;
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        fsutil::write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let m: Manifest = fsutil::read_json(&dir.join(MANIFEST_FILE), "not a run directory; run `ali-lab train` first")?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(CliError::Failed(format!(
                "manifest format_version {} is not supported (expected {MANIFEST_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.final_metrics.get(key).copied()
    }

    /// Checkpoint path for `step`, or the last good one.
    pub fn checkpoint_for(&self, dir: &Path, step: Option<u64>) -> CliResult<std::path::PathBuf> {
        let rel = match step {
            Some(s) => self.checkpoints.iter().find(|c| c.step == s).map(|c| c.path.clone()).ok_or_else(|| {
                let have: Vec<String> = self.checkpoints.iter().map(|c| c.step.to_string()).collect();
                CliError::missing(&dir.join(format!("checkpoints/step {s}")), format!("available steps: {}", have.join(", ")))
            })?,
            None => self
                .last_good_checkpoint
                .clone()
                .ok_or_else(|| CliError::missing(dir, "the run has no checkpoint yet"))?,
        };
        Ok(dir.join(rel))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::start("run", &RunConfig::default());
        m.final_metrics.insert("covered".into(), 25.0);
        m.checkpoints.push(CheckpointEntry {
            step: 0,
            path: "checkpoints/step_0000000.json".into(),
        });
        m.finish(RunStatus::Completed, None);
        m.write(dir.path()).unwrap();
        let back = Manifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(!back.partial);
    }

    #[test]
    fn aborted_runs_stay_partial() {
        let mut m = Manifest::start("run", &RunConfig::default());
        m.finish(RunStatus::Aborted, Some("nan".into()));
        assert!(m.partial);
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"status\":\"aborted\""));
    }

    #[test]
    fn missing_manifest_is_a_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(Manifest::read(dir.path()).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn unknown_step_lists_available_checkpoints() {
        let mut m = Manifest::start("run", &RunConfig::default());
        m.checkpoints.push(CheckpointEntry { step: 5, path: "a".into() });
        let e = m.checkpoint_for(Path::new("/x"), Some(7)).unwrap_err();
        assert_eq!(e.exit_code(), 4);
        assert!(e.to_string().contains("5"));
    }
}
