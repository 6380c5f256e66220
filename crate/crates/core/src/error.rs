use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: column `{0}` not found in header")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("event log is empty")]
    EmptyLog,

    #[error("vector file line {line}: {message}")]
    VectorFormat { line: u64, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} split is empty")]
    EmptySplit(&'static str),

    #[error("event index {index} out of range for trace of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate time scaler: {0}")]
    DegenerateScaler(String),

    #[error("prefix of length {length} exceeds the configured maximum of {max} time steps")]
    PrefixTooLong { length: usize, max: usize },

    #[error("trace `{0}` has no outcome label")]
    Unlabeled(String),

    #[error("non-finite loss at sample {sample}")]
    NonFiniteLoss { sample: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("labels contain a single class; metric is undefined")]
    SingleClass,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("bundle integrity error: {0}")]
    Integrity(String),

    #[error("unsupported bundle version `{0}`")]
    Version(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
