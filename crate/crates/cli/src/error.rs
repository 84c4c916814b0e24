use std::path::PathBuf;

use thiserror::Error;

use crate::tcube::TcubeError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const MISSING_CHECKPOINT: i32 = 4;
    pub const DIVERGENCE: i32 = 5;
    pub const EVAL_MISMATCH: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    Schema {
        path: String,
        message: String,
        suggestion: Option<String>,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Tcube {
        path: PathBuf,
        #[source]
        source: TcubeError,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(String),

    #[error("training diverged at epoch {epoch} (loss {loss}); last good checkpoint kept at {}", checkpoint.display())]
    Divergence { epoch: usize, loss: f64, checkpoint: PathBuf },

    #[error("reconstruction and ground truth do not match: {0}")]
    EvalMismatch(String),

    #[error(transparent)]
    Core(#[from] nlos_core::CoreError),

    #[error(transparent)]
    Model(#[from] nlos_model::ModelError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema { .. } | Self::Usage(_) => exit::USAGE,
            Self::Io { .. } | Self::Tcube { .. } | Self::Format { .. } => exit::IO,
            Self::Model(nlos_model::ModelError::Io(_)) => exit::IO,
            Self::MissingCheckpoint(_) => exit::MISSING_CHECKPOINT,
            Self::Divergence { .. } => exit::DIVERGENCE,
            Self::EvalMismatch(_) => exit::EVAL_MISMATCH,
            Self::Core(_) | Self::Model(_) => exit::FAILURE,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}

impl From<(PathBuf, TcubeError)> for CliError {
    fn from((path, source): (PathBuf, TcubeError)) -> Self {
        match source {
            TcubeError::Io(source) => Self::Io { path, source },
            source => Self::Tcube { path, source },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
