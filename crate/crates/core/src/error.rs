use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix market parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported matrix market field `{0}` (only real and integer are accepted)")]
    UnsupportedField(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("missing structural diagonal entry in row {row}")]
    MissingDiagonal { row: usize },

    #[error("zero pivot encountered in row {row}")]
    ZeroPivot { row: usize },

    #[error("structurally singular: row {row} has no usable pivot")]
    StructurallySingular { row: usize },

    #[error("stagnation: zero norm in heuristic bound (iterate did not move)")]
    Stagnation,

    #[error("negative opacity {value} at index {index}")]
    NegativeOpacity { index: usize, value: f64 },

    #[error("non-finite value in solver state at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("least-squares breakdown: {0}")]
    Breakdown(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
