use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("no metrics rows match {0}")]
    EmptySelection(String),

    #[error(transparent)]
    Learn(#[from] contracting_learn::LearnError),

    #[error(transparent)]
    Game(#[from] contracting_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::EmptySelection(_) => 2,
            HarnessError::Learn(contracting_learn::LearnError::Config(_)) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
