use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}: unknown tone label `{label}`")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("dataset contains no rows")]
    EmptyDataset,
    #[error("contour has no frames")]
    EmptyContour,
    #[error("speaker `{0}` has no statistics")]
    MissingSpeakerStats(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("loss undefined: {0}")]
    UndefinedLoss(String),
    #[error("framing error: {0}")]
    Framing(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("config hash mismatch: checkpoint {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
