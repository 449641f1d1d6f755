use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MsthError>;

#[derive(Debug, Error)]
pub enum MsthError {
    #[error("empty-input")]
    EmptyInput,

    #[error("shape-mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("no-accumulated-activity")]
    NoAccumulatedActivity,

    #[error("invalid-health: {0} is outside [0, 1]")]
    InvalidHealth(f64),

    #[error("empty-run")]
    EmptyRun,

    #[error("run-failed: non-finite value at step {step}")]
    RunFailed { step: u64 },

    #[error("bad-target: {0}")]
    BadTarget(String),

    #[error("invalid layer index {index} (network has {layers} layers)")]
    InvalidLayer { index: usize, layers: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("empty-dataset: {0}")]
    EmptyDataset(PathBuf),

    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("empty matrix: at least one ablation cell is required")]
    EmptyMatrix,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MsthError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MsthError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        MsthError::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            MsthError::Config(_) | MsthError::EmptyMatrix => 2,
            MsthError::Dataset(_)
            | MsthError::EmptyDataset(_)
            | MsthError::NonNumeric { .. }
            | MsthError::Csv(_) => 3,
            MsthError::Io { .. } => 3,
            _ => 4,
        }
    }
}
