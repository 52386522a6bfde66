//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv at line {line}: {reason}")]
    MalformedCsv { line: u64, reason: String },

    #[error("label column `{0}` not found in header")]
    UnknownLabelColumn(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("class {class} has {count} rows, need at least {required}")]
    ClassTooSmall {
        class: usize,
        count: usize,
        required: usize,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unsupported forest format_version {found}, expected {expected}")]
    VersionMismatch { found: i64, expected: i64 },

    #[error("corrupt forest payload: {0}")]
    CorruptPayload(String),

    #[error("exact Shapley enumeration supports at most {max} features, got {got}")]
    TooManyFeatures { got: usize, max: usize },

    #[error("background dataset is empty")]
    EmptyBackground,

    #[error("index {index} out of range for size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("prototype set is empty")]
    EmptyPrototypeSet,

    #[error("requested {requested} prototypes but only {available} candidates exist")]
    MTooLarge { requested: usize, available: usize },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("class {0} does not occur in the proxy labels")]
    DegenerateClass(usize),

    #[error("all paired differences are zero")]
    AllZeroDifferences,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unknown instance id {id} (split has {len} rows)")]
    UnknownInstanceId { id: usize, len: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
