use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the detector library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature names differ: missing from input [{}], not in model [{}]", missing.join(", "), unexpected.join(", "))]
    FeatureMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("not enough rows: need at least {needed}, found {found}")]
    InsufficientRows { needed: usize, found: usize },

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("labels contain a single class; both anomalies and normal points are required")]
    SingleClass,

    #[error("labels contain no anomalies")]
    NoPositives,

    #[error("missing value for model '{model}' on dataset '{dataset}'")]
    MissingCell { model: String, dataset: String },

    #[error("model file parse error at byte offset {offset} (line {line}, column {column}): {message}")]
    ModelParse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported model format_version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
