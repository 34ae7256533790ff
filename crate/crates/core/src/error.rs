use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: invalid row: {message}")]
    Validation { line: u64, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot visualize a signature with {0} channels (only 1 or 3)")]
    UnsupportedVisualization(usize),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("job {job_id}: label {label:?} is not in the class vocabulary")]
    UnknownLabel { job_id: String, label: String },

    #[error("job {0} has no label")]
    MissingLabel(String),

    #[error("class {0:?} is not present in the dataset")]
    UnknownClass(String),

    #[error("class {class:?} has {have} members, at least {need} required")]
    ClassTooSmall {
        class: String,
        have: usize,
        need: usize,
    },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
