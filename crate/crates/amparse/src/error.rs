use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: {op} got {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("parse error at byte {pos}: {msg}")]
    Penman { pos: usize, msg: String },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("corpus line {line}: {msg}")]
    Corpus { line: usize, msg: String },

    #[error("bad configuration: {0}")]
    Config(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
