//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced while building problems or tracing paths.
#[derive(Debug, Error)]
pub enum PathError {
    /// Input text could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input data violates a structural requirement (single class, empty
    /// stream, inconsistent dimensions, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The bordered margin-set matrix is singular or nearly so.
    #[error("singular margin system (pivot {pivot:.3e}, threshold {threshold:.3e})")]
    SingularSystem { pivot: f64, threshold: f64 },

    /// An iterative solver hit its iteration cap.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    /// A numerical invariant failed mid-trace; carries the breakpoint ordinal
    /// and the parameter value where tracing stopped.
    #[error("numerical failure at breakpoint {k} (theta {theta:.6e}): {message}")]
    Numerical { k: usize, theta: f64, message: String },

    /// The path exceeded its breakpoint budget without reaching the end of
    /// the parameter interval.
    #[error("suspected cycling: {0} breakpoints without reaching theta_max")]
    SuspectedCycling(usize),

    /// A caller violated an operation's precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl PathError {
    /// Convenience constructor for mid-trace numerical failures.
    pub fn numerical(k: usize, theta: f64, message: impl Into<String>) -> Self {
        PathError::Numerical {
            k,
            theta,
            message: message.into(),
        }
    }
}
