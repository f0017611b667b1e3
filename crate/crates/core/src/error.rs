use thiserror::Error;

/// Errors produced by mesh construction, space setup, assembly, and solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("mesh structure error: {0}")]
    Structure(String),

    #[error("degenerate or invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("unsupported capability: {0}")]
    Capability(String),

    #[error("point outside element domain: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("iteration diverged at step {iteration}: {msg}")]
    Divergence { iteration: usize, msg: String },

    #[error("manufactured case self-check failed: {0}")]
    SelfCheck(String),
}

pub type Result<T> = std::result::Result<T, Error>;
