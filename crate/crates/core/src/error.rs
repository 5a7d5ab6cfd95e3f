use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("negative value in {0}")]
    Negative(&'static str),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// An iterative solver ran out of iterations. `last_iterate` is the
    /// solver's final guess, flattened.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    Divergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("time step {step} failed: {source}")]
    StepFailed { step: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for solver non-convergence, including a failed time step whose
    /// cause was non-convergence.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::Singular(_) => true,
            Error::StepFailed { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}
