//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown distribution `{0}`")]
    UnknownDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular covariance: eigenvalue {index} is {value:.3e}, below {floor:.3e}")]
    SingularCovariance {
        index: usize,
        value: f64,
        floor: f64,
    },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is not orthogonal: max residual {0:.3e}")]
    NotOrthogonal(f64),

    #[error("matrix is not symmetric: max residual {0:.3e}")]
    NotSymmetric(f64),

    #[error("non-skew-symmetric generator: max residual {0:.3e}")]
    NotSkewSymmetric(f64),

    #[error("circuit layout too large: {qubits} qubits exceeds cap of {cap}")]
    LayoutTooLarge { qubits: usize, cap: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
