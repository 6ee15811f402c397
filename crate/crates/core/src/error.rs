use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("symptom index {index} out of range for {symptom_count} symptoms")]
    SymptomOutOfRange { index: usize, symptom_count: usize },

    #[error("cell index {index} out of range for {cell_count} cells")]
    CellOutOfRange { index: usize, cell_count: usize },

    #[error("dimension mismatch: {left} cells vs {right} cells")]
    DimensionMismatch { left: usize, right: usize },

    #[error("probability at cell {index} is {value}, expected a finite non-negative number")]
    InvalidProbability { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, expected 1 within {tolerance:e}")]
    NotOnSimplex { sum: f64, tolerance: f64 },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("{file}: {reason}")]
    Format { file: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(file: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            reason: reason.into(),
        }
    }
}
