use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// All weights were zero; nothing to normalize.
    #[error("degenerate distribution: no positive mass")]
    DegenerateDistribution,

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("remote model unavailable: {0}")]
    RemoteUnavailable(String),

    #[error("protocol error at row {row}: {message}")]
    Protocol { row: usize, message: String },

    #[error("model format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }
}
