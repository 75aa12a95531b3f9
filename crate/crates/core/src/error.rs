use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero-norm vector where a direction is required")]
    ZeroNorm,

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("label column {column:?} row {row} holds {value:?}; expected 0 or 1")]
    BadLabel {
        row: usize,
        column: String,
        value: String,
    },

    #[error("label column {0:?} not present in header")]
    MissingLabelColumn(String),

    #[error("labels are required for {0}")]
    LabelsRequired(&'static str),

    #[error("both inlier and outlier classes are required")]
    SingleClass,

    #[error("epoch {got} is not after the previous observation at epoch {previous}")]
    NonMonotoneEpoch { previous: usize, got: usize },

    #[error("learning rate underflow: no decreasing step after {halvings} halvings")]
    LearningRateUnderflow { halvings: u32 },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}
