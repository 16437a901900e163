use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Game(#[from] contracting_core::Error),

    #[error("non-finite {0}; update skipped")]
    NonFinite(String),

    #[error("empty training batch")]
    EmptyBatch,

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;
