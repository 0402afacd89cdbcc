use std::io;
use std::path::{Path, PathBuf};

use calred_core::{DenoiseError, SolveError, StepError};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const IO: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const EXTERNAL: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } | CliError::Format { .. } => exit::IO,
            CliError::Solve(SolveError::Invalid(_)) => exit::USAGE,
            CliError::Solve(SolveError::Aborted {
                source: StepError::Denoiser(DenoiseError::External(_)),
                ..
            }) => exit::EXTERNAL,
            CliError::Solve(SolveError::Aborted { .. }) => exit::SOLVER,
        }
    }
}

impl From<calred_core::Error> for CliError {
    fn from(e: calred_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
