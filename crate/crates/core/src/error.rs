use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("contour passes within {min_abs:.3e} of a characteristic root; perturb the rectangle")]
    ContourTooClose { min_abs: f64 },

    #[error("root isolation budget exhausted: {found} of {expected} roots isolated")]
    RootBudget {
        found: usize,
        expected: usize,
        partial: Vec<num_complex::Complex64>,
    },

    #[error("lambda = {re} + {im}i lies in the spectrum (|char value| = {abs:.3e})")]
    InSpectrum { re: f64, im: f64, abs: f64 },

    #[error("no stationary solution; see spectral abscissa ({0})")]
    Unstable(String),

    #[error("lag {0} outside the covariance table")]
    LagOutOfRange(f64),

    #[error("ensemble too small: {0} paths (need at least 30)")]
    TooFewPaths(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
