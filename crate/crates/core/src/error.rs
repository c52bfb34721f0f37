use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unparseable value `{value}` at row {row}, column `{column}`")]
    BadCell { row: usize, column: String, value: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("hierarchy cycle: {}", .0.join(" -> "))]
    HierarchyCycle(Vec<String>),

    #[error("label `{label}` references unknown parent `{parent}`")]
    DanglingParent { label: String, parent: String },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("degenerate truth for `{label}`: all samples belong to one class")]
    DegenerateTruth { label: String },

    #[error("classifier set mismatch: {0}")]
    ClassifierMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
