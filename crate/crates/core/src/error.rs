use std::io;

use thiserror::Error;

pub type Result<T, E = GapError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GapError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("degenerate embedding: projected feature vector is all zero")]
    DegenerateEmbedding,

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("query budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png error: {0}")]
    Png(String),
}

impl GapError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GapError::InvalidArgument(msg.into())
    }

    /// True for failures that originate at the similarity oracle rather than
    /// in local validation or file handling.
    pub fn is_oracle_failure(&self) -> bool {
        matches!(
            self,
            GapError::Transport(_)
                | GapError::Protocol(_)
                | GapError::BudgetExceeded(_)
                | GapError::DegenerateEmbedding
        )
    }
}

impl From<png::EncodingError> for GapError {
    fn from(e: png::EncodingError) -> Self {
        GapError::Png(e.to_string())
    }
}

impl From<png::DecodingError> for GapError {
    fn from(e: png::DecodingError) -> Self {
        GapError::Png(e.to_string())
    }
}

impl From<csv::Error> for GapError {
    fn from(e: csv::Error) -> Self {
        GapError::Io(io::Error::other(e))
    }
}
