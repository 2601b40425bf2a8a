use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of the experiment commands, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: gorelm::Error,
    },

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("solver failure: {0}")]
    Solver(#[source] gorelm::Error),
}

impl CliError {
    /// 1 usage or config, 2 data, 3 solver.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Data { .. } | CliError::Io { .. } => 2,
            CliError::Solver(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub(crate) fn data(path: &Path, source: gorelm::Error) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
