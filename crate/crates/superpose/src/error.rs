use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/vector dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scalar argument is outside its allowed domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// An index or size argument is out of range.
    #[error("range error: {0}")]
    Range(String),

    /// A binary file does not match its documented layout.
    #[error("format error: {0}")]
    Format(String),

    /// The requested pair policy admits no valid pair.
    #[error("pair policy unsatisfiable: {0}")]
    PolicyUnsatisfiable(String),

    /// An embedding collapsed to the zero vector.
    #[error("degenerate embedding: zero vector cannot form a density matrix")]
    DegenerateEmbedding,

    /// Training produced non-finite values.
    #[error("divergence: {0}")]
    Divergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
