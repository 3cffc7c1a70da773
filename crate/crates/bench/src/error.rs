use thiserror::Error;

pub type BenchResult<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Bad flags, config files or model references. Exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// A greedy run diverged from target-only greedy decoding.
    #[error("greedy equivalence violated in run {label}, prompt {prompt}:\n{diff}")]
    GreedyMismatch { label: String, prompt: usize, diff: String },

    #[error(transparent)]
    Core(#[from] csd_core::Error),

    #[error("{0}")]
    Runtime(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Core(csd_core::Error::Config(_) | csd_core::Error::Format(_)) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn config(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}
