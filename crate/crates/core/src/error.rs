use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite evaluation: {0}")]
    NonFinite(String),
    #[error("maximizer touched the search boundary (radius {radius}); enlarge the search radius")]
    MaximizerOnBoundary { radius: f64 },
    #[error("bracketing failed after {doublings} doublings: {context}")]
    BracketingFailed { doublings: usize, context: String },
    #[error("root finder did not converge: {0}")]
    NoConvergence(String),
    #[error("monotonicity violated: {0}")]
    NotMonotone(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("solver error at eps={eps}: {message}")]
    Solve { eps: f64, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
