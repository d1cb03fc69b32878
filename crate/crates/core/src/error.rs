use thiserror::Error;

use crate::saddle::SaddleSolution;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("{context} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("saddle solver stopped with gap {gap:.3e} above tolerance after {} iterations", best.iterations)]
    SaddleNonConvergence { best: Box<SaddleSolution>, gap: f64 },

    #[error("saddle solution is not certified (gap {gap:.3e})")]
    Uncertified { gap: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("pairwise solves failed: {0}")]
    Battery(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}
