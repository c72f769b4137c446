use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training failed at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("schema error: missing column {0}")]
    MissingColumn(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Errors raised while parsing a serialized model.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("unsupported model format header {found:?} (expected \"furcnet-model v1\")")]
    Version { found: String },

    #[error("truncated payload: expected {expected}")]
    Truncated { expected: String },

    #[error("shape inconsistency in {block}: {detail}")]
    ShapeInconsistency { block: String, detail: String },

    #[error("unknown {field} token {token:?}")]
    UnknownToken { field: String, token: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
