use thiserror::Error;

/// Errors produced by the inference engine and its file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate edge {src} -> {dst}")]
    DuplicateEdge { src: String, dst: String },

    #[error("self-loop on node {node}")]
    SelfLoop { node: String },

    #[error("edge {src} -> {dst} has no reverse entry with the same weight")]
    Asymmetric { src: String, dst: String },

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("problem size {size} exceeds the limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("system matrix is singular")]
    Singular,

    #[error("iteration diverged at step {iteration} (change {change:e})")]
    Diverged { iteration: usize, change: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
