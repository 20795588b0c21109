use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("no samples")]
    NoSamples,

    #[error("grid mismatch between distributions")]
    GridMismatch,

    #[error("mixing weight {0} outside [0, 1]")]
    InvalidWeight(f64),

    #[error("total loss uncoverable")]
    TotalLoss,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("empty history")]
    EmptyHistory,

    #[error("trace is not labeled")]
    Unlabeled,

    #[error("crf {0} is not in the configured crf set")]
    UnknownCrf(u32),

    #[error("empty predictions")]
    EmptyPredictions,

    #[error("duration mismatch: network trace has {network} s, video trace has {video} s")]
    DurationMismatch { network: usize, video: usize },

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }
}
