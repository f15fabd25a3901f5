//! Error type shared across the crate.

use thiserror::Error;

/// Convenience alias used by every fallible routine in this crate.
pub type Result<T> = std::result::Result<T, CboError>;

/// Everything that can go wrong while building or driving an ensemble.
#[derive(Debug, Error)]
pub enum CboError {
    /// A solver or sampler parameter violates its documented constraint.
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        /// Name of the offending parameter (matches the struct field / CLI flag).
        name: &'static str,
        /// The rejected value, rendered as text.
        value: String,
        /// The constraint that was violated.
        constraint: &'static str,
    },

    /// Two quantities that must share a dimension do not.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// An operation that needs at least one agent or point received none.
    #[error("empty input in {context}: at least one element is required")]
    EmptyInput { context: &'static str },

    /// A vector that must be renormalized has norm below the safe threshold.
    #[error("degenerate vector in {context}: norm {norm:.3e} is below 1e-14")]
    DegenerateVector { context: String, norm: f64 },

    /// A computed quantity (weight, energy, coordinate) is NaN or infinite.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// An analytic gradient was requested from an objective that has none.
    #[error("objective `{objective}` provides no analytic gradient; use finite differences")]
    MissingGradient { objective: String },

    /// An operation needs the objective's known minimizer, which is absent.
    #[error("objective `{objective}` has no known minimizer")]
    MissingMinimizer { objective: String },

    /// An iterative routine exhausted its budget without meeting its tolerance.
    #[error("{context} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A point-cloud file is malformed (bad float, ragged row, no data rows).
    #[error("point-cloud format error at line {line}: {message}")]
    PointCloudFormat { line: usize, message: String },

    /// An underlying I/O failure while reading input data.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
