use thiserror::Error;

/// Errors raised by model construction, validation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("invalid traffic profile: {0}")]
    InvalidTraffic(String),
    #[error("utility is undefined: {0}")]
    UndefinedUtility(String),
    #[error("invalid pairing graph: {0}")]
    InvalidGraph(String),
    #[error("brute-force search supports at most {limit} edges, got {got}")]
    TooManyEdges { limit: usize, got: usize },
    #[error("linear program failed: {0}")]
    Lp(String),
}

pub type Result<T> = std::result::Result<T, Error>;
