use thiserror::Error;

/// Errors produced anywhere in the simulation, training and evaluation chain.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates one of its invariants.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument passed to an operation is outside its domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Tensor or signal shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A binary file does not follow the expected layout.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A binary file is shorter or longer than its header implies.
    #[error("size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    /// Broken internal bookkeeping, e.g. pooling indices from the wrong stage.
    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("metadata error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by file contents or I/O rather than by configuration.
    pub fn is_io_like(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Format { .. } | Error::SizeMismatch { .. } | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
