use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    #[error("size cap exceeded: {0}")]
    SizeCapExceeded(String),

    #[error("symbol {0} not in alphabet")]
    SymbolNotInAlphabet(f64),

    #[error("corrupt policy: {0}")]
    CorruptPolicy(String),

    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
