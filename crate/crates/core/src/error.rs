use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("empty result: {0}")]
    EmptyResult(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("homophily undefined: no edge has both endpoint labels defined")]
    HomophilyUndefined,
    #[error("node {node} has zero degree in the propagation graph")]
    ZeroDegree { node: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("user {user} has interacted with every item; no negative can be sampled")]
    NoNegativeAvailable { user: usize },
    #[error("non-finite value detected: {0}")]
    NonFinite(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Validation problems exit with 1, everything else with 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
