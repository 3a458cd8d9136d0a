use std::path::PathBuf;

/// Errors produced anywhere in the detection-fusion pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A metric (F1, average rank, ...) is undefined for the given data.
    #[error("undefined metric: {0}")]
    Undefined(String),

    /// Training data cannot support the requested model (e.g. one class only).
    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("parse error in {}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: u64,
        message: String,
    },

    #[error("config validation failed: {}", .problems.join("; "))]
    Config { problems: Vec<String> },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidSpec(_) => "invalid-spec",
            Error::Undefined(_) => "undefined",
            Error::DegenerateData(_) => "degenerate-data",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::IdMismatch(_) => "id-mismatch",
            Error::Parse { .. } => "parse",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
