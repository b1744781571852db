use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage `{0}` has not been run")]
    StageMissing(String),
    #[error("stage `{stage}` needs complete inputs; failed subjects: {subjects}")]
    IncompleteInputs { stage: String, subjects: String },
    #[error("verification failed:\n  {}", .0.join("\n  "))]
    Verify(Vec<String>),
    #[error("checksum mismatch for {0}")]
    Checksum(String),
    #[error(transparent)]
    Core(#[from] roinet::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.into(), source }
    }
}
