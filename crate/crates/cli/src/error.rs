use std::path::PathBuf;

use oslr_core::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Ingest {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{0}")]
    Core(#[from] oslr_core::Error),
    #[error("serialisation: {0}")]
    Serialise(String),
}

impl CliError {
    /// 0 success, 1 io, 2 usage, 3 validation, 4 numerical failure,
    /// 5 infeasible design, 6 indeterminate test.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Serialise(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Ingest { .. } => 3,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 3,
                ErrorKind::Numerical => 4,
                ErrorKind::Infeasible => 5,
                ErrorKind::Indeterminate => 6,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
