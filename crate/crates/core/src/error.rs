use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer index out of range: {from}->{to} for depth {depth}")]
    LayerRange { from: usize, to: usize, depth: usize },

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): {detail}")]
    Diverged {
        epoch: usize,
        learning_rate: f64,
        detail: String,
    },

    #[error("{path}: malformed IDX data at byte offset {offset}: {reason}")]
    Idx {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("example {index}: {source}")]
    AtExample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
