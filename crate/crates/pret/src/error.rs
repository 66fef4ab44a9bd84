use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum PretError {
    #[error("dimension mismatch: {op} with shapes {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("attention mask invariant violated: {0}")]
    Mask(String),
    #[error("kv-cache error: {0}")]
    Cache(String),
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("optimizer error: {0}")]
    Optimizer(String),
    #[error("environment generation failed: {0}")]
    Generation(String),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("episode sampling failed: {0}")]
    Sampling(String),
    #[error("speaker error: {0}")]
    Speaker(String),
    #[error("vocab error: unknown token {0}")]
    Vocab(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("graph integrity error: {0}")]
    Integrity(String),
    #[error("routing error: no path from {from} to {to}")]
    Routing { from: usize, to: usize },
    #[error("metrics error: {0}")]
    Metrics(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, PretError>;
