use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {value} outside the interval [-1, 1]")]
    OutOfInterval { value: f64 },

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("points too close for the Green's function: |x - y| = {0:e}")]
    Singularity(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigenvector normalization failed: first component is {0:e}")]
    Normalization(f64),

    #[error("smallest eigenvalue is not simple (gap {0:e})")]
    NotSimple(f64),

    #[error("reduced matrix is not invertible (det {det:e}, threshold {threshold:e})")]
    NotInvertible { det: f64, threshold: f64 },

    #[error("circulant coefficients are not reflection symmetric (imaginary residue {0:e})")]
    Asymmetric(f64),

    #[error("r-scan failed: {0}")]
    Scan(String),

    #[error("line search failed: {0}")]
    LineSearch(String),
}

impl Error {
    /// True for errors caused by bad input rather than by a numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::OutOfInterval { .. }
                | Error::Domain(_)
                | Error::Singularity(_)
                | Error::Config(_)
                | Error::InvalidParameter(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
