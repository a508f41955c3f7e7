//! Front end for the simulator: experiment files, CSV bundles, grids and the
//! closed-form-versus-simulation validation suite.

pub mod commands;
pub mod config;
pub mod output;
pub mod validate;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error(transparent)]
    Core(#[from] elastica_core::Error),

    #[error("all {0} replicas diverged (partial data written)")]
    AllDiverged(usize),

    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config { .. } | CliError::Core(_) => 2,
            CliError::AllDiverged(_) => 3,
            CliError::ValidationFailed(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn usage(message: impl Into<String>) -> Self {
        CliError::Config {
            line: None,
            message: message.into(),
        }
    }
}
