use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The augmented Lagrangian subproblem has no minimizer at the current
    /// shift (singular, inconsistent system).
    #[error("subproblem unbounded below at iteration {iteration}")]
    SubproblemUnbounded { iteration: usize },

    #[error("subproblem gradient norm {grad_norm:.3e} exceeds tolerance {tol:.3e} at iteration {iteration}")]
    SubproblemInaccurate {
        iteration: usize,
        grad_norm: f64,
        tol: f64,
    },

    #[error("{0} failed to converge")]
    Decomposition(&'static str),

    #[error("parse error in {context}: {message}")]
    Parse {
        context: String,
        message: String,
        line: usize,
        column: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Parse {
            context: context.into(),
            message: err.to_string(),
            line: err.line(),
            column: err.column(),
        }
    }
}
