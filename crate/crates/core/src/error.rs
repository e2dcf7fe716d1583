use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no spectral peak: {0}")]
    NoPeak(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Plan validation failed; `fields` names every offending field.
    #[error("plan validation failed on [{}]: {}", fields.join(", "), messages.join("; "))]
    Validation {
        fields: Vec<String>,
        messages: Vec<String>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
