use thiserror::Error;

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid session config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] biotone_core::Error),

    /// A session log line failed to parse. Lines are 1-based.
    #[error("session log line {line}: {message}")]
    Log { line: usize, message: String },

    #[error("malformed client frame: {0}")]
    Frame(String),

    #[error("render worker stopped: {0}")]
    Worker(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
