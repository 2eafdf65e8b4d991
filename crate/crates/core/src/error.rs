use std::fmt;

/// Coarse grouping of failures, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numerical,
    Io,
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{spins} spins exceeds the supported maximum of {max}")]
    DimensionTooLarge { spins: usize, max: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("matrix is rank deficient; smallest singular values {singular_values:?}")]
    RankDeficient { singular_values: Vec<f64> },

    #[error("input state matrix is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("tomography design matrix is singular")]
    SingularDesign,

    #[error("readouts leave {} product operators unobservable: {}", missing.len(), missing.join(", "))]
    Coverage { missing: Vec<String> },

    #[error("unknown gate label `{0}`")]
    UnknownGate(String),

    #[error("pulse library has no entry for `{0}`")]
    MissingLibraryEntry(String),

    #[error("unknown product operator `{0}`")]
    UnknownOperator(String),

    #[error("eigensolver failed to converge (residual {residual:.3e})")]
    EigenSolver { residual: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{context}: {message}")]
    Config { context: String, message: String },

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config { .. }
            | Error::Format(_)
            | Error::UnknownGate(_)
            | Error::MissingLibraryEntry(_)
            | Error::UnknownOperator(_)
            | Error::DimensionTooLarge { .. } => ErrorCategory::Config,
            Error::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
