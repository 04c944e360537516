//! The `ali-lab` command line: data generation, training, sweeps,
//! evaluation, plots and the tabular theory checks.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 run
//! aborted on a non-finite value, 4 missing artifact.

pub mod args;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod fsutil;
pub mod manifest;
pub mod models;
pub mod oracle;
pub mod plot;
pub mod run;
pub mod search;

use std::path::PathBuf;

use ali_lab_core::eval::OracleConfig;

pub use args::{Cli, Command};
pub use config::{ModelKind, RunConfig};
pub use error::{CliError, CliResult};

fn print_json(v: &impl serde::Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| CliError::Failed(e.to_string()))?);
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenerateData => {
            let mut cfg = cli.run_config()?;
            if let Some(s) = cli.seed {
                cfg.data.seed = s;
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("data"));
            data::cmd_generate_data(&cfg.data, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Train => {
            let cfg = cli.run_config()?;
            let out = run::resolve_out(&cfg, cli.out.as_deref());
            let m = run::cmd_train(&cfg, &out)?;
            println!("{} finished {} steps in {}", m.model_kind, m.steps_completed, out.display());
            print_json(&m.final_metrics)?;
        }
        Command::Search => {
            let cfg = cli.run_config()?;
            let runs = cli.runs.unwrap_or(cfg.search.runs);
            let out = cli
                .out
                .clone()
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from(format!("runs/search-{}-seed{}", cfg.model, cfg.seed)));
            let board = search::cmd_search(&cfg, &out, runs)?;
            println!("best: {}", board.best_run_dir.as_deref().unwrap_or("none"));
            print_json(&board.summary)?;
        }
        Command::Eval { run_dirs } => {
            let which = cli.which.unwrap_or(evaluate::Which::All);
            print_json(&evaluate::cmd_eval(run_dirs, which, cli.steps)?)?;
        }
        Command::Plot { run_dirs } => {
            let path = plot::cmd_plot(run_dirs, cli.out.as_deref(), cli.steps)?;
            println!("wrote {}", path.display());
        }
        Command::Oracle => {
            let mut cfg = OracleConfig::default();
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(n) = cli.runs {
                cfg.joints = n;
            }
            oracle::cmd_oracle(cfg, cli.out.as_deref())?;
        }
    }
    Ok(())
}
