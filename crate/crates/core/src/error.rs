use thiserror::Error;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    BadNumber {
        line: u64,
        column: String,
        value: String,
    },

    #[error("line {line}, column `{column}`: non-finite value `{value}`")]
    NonFinite {
        line: u64,
        column: String,
        value: String,
    },

    #[error("line {line}: time {time} goes back {back:.6} s (tolerance {tolerance} s)")]
    NonMonotoneTime {
        line: u64,
        time: f64,
        back: f64,
        tolerance: f64,
    },

    #[error("missing channel `{0}`")]
    MissingChannel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("PDFs are defined on different bin edges")]
    EdgeMismatch,

    #[error("unsupported frame store schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("corrupt frame store: {0}")]
    CorruptStore(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse {
                line,
                message: format!("{other:?}"),
            },
        }
    }
}
