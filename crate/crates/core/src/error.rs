use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("feature sequence has no rows")]
    EmptySequence,

    #[error("sample {0} has no hand stream")]
    MissingHandStream(String),

    #[error("embedding mode needs a text reduction matrix but none was given")]
    MissingReduction,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("evaluation set is empty")]
    EmptyEvaluationSet,

    #[error("truth class {0} does not appear in the ranking")]
    UnrankedClass(String),

    #[error("embedding mode carries no attributes")]
    ModeWithoutAttributes,

    #[error("no misclassified samples")]
    NoMisclassifications,

    #[error("oracle instance too large: {0}")]
    InstanceTooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Variant name, for messages that should name the failure class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::Parse { .. } => "Parse",
            Error::InvariantViolation(_) => "InvariantViolation",
            Error::EmptySequence => "EmptySequence",
            Error::MissingHandStream(_) => "MissingHandStream",
            Error::MissingReduction => "MissingReduction",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::EmptyCandidates => "EmptyCandidates",
            Error::UnknownClass(_) => "UnknownClass",
            Error::DegenerateData(_) => "DegenerateData",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::SingularSystem(_) => "SingularSystem",
            Error::Unsupported(_) => "Unsupported",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::EmptyEvaluationSet => "EmptyEvaluationSet",
            Error::UnrankedClass(_) => "UnrankedClass",
            Error::ModeWithoutAttributes => "ModeWithoutAttributes",
            Error::NoMisclassifications => "NoMisclassifications",
            Error::InstanceTooLarge(_) => "InstanceTooLarge",
            Error::Io(_) => "Io",
        }
    }

    pub fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }
}
