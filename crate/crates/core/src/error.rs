use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a function.
    #[error("{func}: argument {arg} is outside the domain")]
    Domain { func: &'static str, arg: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("overflow in {context}")]
    Overflow { context: String },

    #[error(
        "matrix is not positive definite after jitter {jitter:e} (min eigenvalue {min_eigenvalue:e})"
    )]
    NotPositiveDefinite { jitter: f64, min_eigenvalue: f64 },

    #[error("no observations supplied")]
    EmptyObservations,

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("fit failed after {restarts} restart(s): {message}")]
    Fit { restarts: usize, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// True for failures caused by floating-point breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow { .. } | Error::NotPositiveDefinite { .. } | Error::Fit { .. }
        )
    }
}
