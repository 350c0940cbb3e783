use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sample size mismatch: X has {x} rows, Y has {y}")]
    SampleSizeMismatch { x: usize, y: usize },

    #[error("degenerate bandwidth: all pooled points coincide")]
    DegenerateBandwidth,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
