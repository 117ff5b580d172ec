use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("steady state is not unique (null space dimension {0})")]
    DegenerateSteadyState(usize),

    #[error("unsupported configuration: {0}")]
    Unsupported(&'static str),

    #[error("conditional state lost positivity (min eigenvalue {min_eigenvalue:e}); reduce dt")]
    StepSize { min_eigenvalue: f64 },

    #[error("filter does not match the integration window: {0}")]
    FilterMismatch(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("no records fell inside the histogram range")]
    AllOutOfRange,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("histogram and projector angles differ")]
    AngleMismatch,

    #[error("Wigner function is not real (imaginary residue {0:e}); input is not Hermitian")]
    NonHermitian(f64),

    #[error("Wigner grid is not normalized (integral {0})")]
    Unnormalized(f64),

    #[error("undefined: {0}")]
    Undefined(&'static str),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
