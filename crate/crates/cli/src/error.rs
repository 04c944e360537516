use std::path::{Path, PathBuf};

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("run aborted: {0}")]
    Aborted(String),
    #[error("missing artifact {path}: {hint}")]
    Missing { path: PathBuf, hint: String },
    #[error("{0}")]
    Failed(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(ali_lab_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Aborted(_) => 3,
            CliError::Missing { .. } => 4,
            CliError::Core(ali_lab_core::Error::NonFinite(_)) => 3,
            _ => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn missing(path: &Path, hint: impl Into<String>) -> Self {
        CliError::Missing {
            path: path.to_path_buf(),
            hint: hint.into(),
        }
    }
}

impl From<ali_lab_core::Error> for CliError {
    fn from(e: ali_lab_core::Error) -> Self {
        match e {
            ali_lab_core::Error::NonFinite(m) => CliError::Aborted(m),
            other => CliError::Core(other),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Failed(format!("csv: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
