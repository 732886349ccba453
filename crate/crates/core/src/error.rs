use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// The moving frame matrix is singular or too badly conditioned to invert.
    #[error("frame is degenerate at x = {point:?} (condition number {condition:e})")]
    FrameDegenerate { point: Vec<f64>, condition: f64 },

    #[error("non-finite value in {0}")]
    NumericDomain(String),

    /// `G^{LD}` has a (numerically) zero eigenvalue at the queried state.
    #[error("constrained Hessian is degenerate (min |eigenvalue| = {min_abs_eigenvalue:e})")]
    Degenerate { min_abs_eigenvalue: f64 },

    #[error("singular linear system in {0}")]
    SingularSolve(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid complete solution: {0}")]
    InvalidCompleteSolution(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration aborted at t = {time}: {reason}")]
    Integration { time: f64, reason: Box<Error> },
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericDomain(what.to_string()))
    }
}
