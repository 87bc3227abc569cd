use thiserror::Error;

/// Errors shared across the runtime.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty action text")]
    EmptyAction,

    #[error("step index {index} out of range (trajectory has {len} steps)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("completion missing '{marker}' marker; raw text: {raw:?}")]
    MissingMarker { marker: &'static str, raw: String },

    #[error("embedding dimension mismatch: expected {expected}, got {got}{}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        got: usize,
        line: Option<usize>,
    },

    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("action enumeration mismatch between distributions")]
    EnumerationMismatch,

    #[error("knowledge base silent: no retrieved next action is available")]
    KbSilent,

    #[error("all action scores are zero")]
    AllZeroScores,

    #[error("unknown task index {0}")]
    UnknownTask(usize),

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("task suite capacity exceeded: requested {requested}, capacity {capacity}")]
    CapacityExceeded { requested: usize, capacity: usize },

    #[error("provider transport failure: {0}")]
    Transport(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("missing stage input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
