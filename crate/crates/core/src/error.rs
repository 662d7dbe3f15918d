use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("line {line}: {kind}")]
    Alignment { line: usize, kind: AlignmentError },

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("missing prerequisite: {}", .0.display())]
    MissingPrerequisite(PathBuf),

    #[error("corrupt data: {0}")]
    Format(String),

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("asset check failed: {0}")]
    Asset(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Distinct ways a forced-alignment label file can be invalid.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignmentError {
    #[error("malformed line: {0}")]
    Malformed(String),
    #[error("unknown phoneme `{0}`")]
    UnknownPhoneme(String),
    #[error("interval starts before the previous one")]
    OutOfOrder,
    #[error("interval overlaps the previous one")]
    Overlap,
    #[error("empty interval (start >= end)")]
    Empty,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by numerics or training rather than bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Training(_))
    }
}
