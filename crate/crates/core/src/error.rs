use std::io;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("malformed RLE: {0}")]
    MalformedRle(String),

    #[error("empty proposal set")]
    EmptyProposalSet,
    #[error("agreement needs at least 2 proposals, got {0}")]
    TooFewProposals(usize),
    #[error("expert `{expert_id}` failed: {message}")]
    ExpertError { expert_id: String, message: String },
    #[error("annotation failed: every expert failed")]
    AnnotationFailed,

    #[error("non-finite parameters")]
    NonFiniteParams,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("non-finite loss at stage {stage}, step {step}")]
    NonFiniteLoss { stage: u8, step: usize },
    #[error("empty subset: {0}")]
    EmptySubset(String),

    #[error("could not place shapes after {0} attempts")]
    PlacementFailure(usize),

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated file")]
    TruncatedFile,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("size mismatch: header declares {declared} values, payload holds {actual}")]
    SizeMismatch { declared: usize, actual: usize },
    #[error("value {value} at index {index} outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("record `{id}`: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
