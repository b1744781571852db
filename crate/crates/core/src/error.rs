use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("atlas is empty")]
    EmptyAtlas,
    #[error("duplicate atlas label `{0}`")]
    DuplicateLabel(String),
    #[error("header mismatch at column {column}: expected `{expected}`, found `{found}`")]
    HeaderMismatch {
        column: usize,
        expected: String,
        found: String,
    },
    #[error("non-numeric cell `{value}` at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("channel `{0}` has zero variance")]
    DegenerateChannel(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("covariance has rank < 2 (second eigenvalue {0:e})")]
    RankDeficient(f64),
    #[error("numeric overflow in {0}")]
    NumericOverflow(&'static str),
    #[error("insufficient subjects: {0}")]
    InsufficientSubjects(String),
    #[error("unexpected group `{0}`")]
    UnexpectedGroup(String),
    #[error("mixed groups in aggregation: `{0}` and `{1}`")]
    MixedGroups(String, String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("mean is zero")]
    ZeroMean,
    #[error("negative probability entry {0}")]
    NegativeProbability(f64),
    #[error("missing attention for subject `{0}`")]
    MissingAttention(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
