use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Arguments with the wrong shape, empty windows, out-of-range labels.
    #[error("rejected input: {0}")]
    Rejected(String),

    #[error("{source_name}: line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// One or more configuration problems, reported together.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite {what} in batch {batch} of epoch {epoch}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("forward cache is stale (cache version {cache}, model version {model})")]
    StaleCache { cache: u64, model: u64 },

    #[error("requested {requested} samples but only {available} are available")]
    SampleSize { requested: usize, available: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: impl ToString, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
