use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no updates supplied")]
    EmptyInput,

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("all aggregation weights are zero")]
    ZeroWeights,

    #[error("invalid weight {0}: weights must be finite and non-negative")]
    InvalidWeight(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("{rule} needs more inputs: got {got}, requires at least {required}")]
    TooFewInputs {
        rule: &'static str,
        got: usize,
        required: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("perturbation direction is undefined for a zero benign mean")]
    UndefinedDirection,

    #[error("trusted update is the zero vector")]
    ZeroTrustedUpdate,

    #[error("weighted defense requires a trusted update")]
    MissingTrustedUpdate,

    #[error("adversary has no impact matrix")]
    MissingImpactMatrix,

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("log has no header")]
    NoHeader,

    #[error("log schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("malformed log record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
