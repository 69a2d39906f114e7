use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint version mismatch: expected {expected:?}, found {found:?}")]
    CheckpointVersion { expected: String, found: String },

    #[error("checkpoint checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    CheckpointChecksum { stored: u64, computed: u64 },

    #[error("checkpoint is truncated or malformed: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint parameters disagree with its config: {0}")]
    CheckpointShape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension(format!("{what}: {a:?} vs {b:?}"))
}
