use thiserror::Error;

pub type Result<T> = std::result::Result<T, OptimError>;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid training configuration: {field} {detail}")]
    Config { field: &'static str, detail: String },

    #[error("malformed dataset at line {line}: {detail}")]
    Dataset { line: usize, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(transparent)]
    Accounting(#[from] gdp_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
