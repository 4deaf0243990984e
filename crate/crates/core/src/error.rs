use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("feature dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("pool too small: {available} candidates left after clipping, batch needs {requested}")]
    PoolExhausted { available: usize, requested: usize },
    #[error("unknown method id `{0}`")]
    UnknownMethod(String),
    #[error("malformed record: {0}")]
    Record(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
