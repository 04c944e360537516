//! `oracle`: exact checks of the optimal-discriminator identities on random
//! tabular joints.

use std::path::Path;

use ali_lab_core::eval::{oracle_report, OracleConfig, OracleReport};

use crate::error::{CliError, CliResult};
use crate::fsutil;

pub const ORACLE_FILE: &str = "oracle.json";

/// One `PASS`/`FAIL` line per identity.
pub fn format_report(report: &OracleReport) -> String {
    let mut s = String::new();
    for c in &report.checks {
        s.push_str(&format!("{} {} (worst {:.3e})\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.worst));
    }
    s.push_str(&format!(
        "{} joints, max side {}, seed {}; {} cells without mass excluded\n",
        report.config.joints, report.config.max_side, report.config.seed, report.excluded_cells
    ));
    s
}

pub fn cmd_oracle(config: OracleConfig, out: Option<&Path>) -> CliResult<OracleReport> {
    let report = oracle_report(config)?;
    print!("{}", format_report(&report));
    if let Some(dir) = out {
        fsutil::create_dir(dir)?;
        fsutil::write_json(&dir.join(ORACLE_FILE), &report)?;
    }
    if !report.passed() {
        return Err(CliError::Failed("oracle identities failed".into()));
    }
    Ok(report)
}
