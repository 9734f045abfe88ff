use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing values after transformation in series: {}", .0.join(", "))]
    MissingValues(Vec<String>),

    #[error("numerical breakdown at sweep {sweep}: {detail}")]
    Numerical { sweep: usize, detail: String },

    #[error("malformed draw file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the input data rather than the configuration
    /// or the numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Data(_) | Error::MissingValues(_) | Error::Csv(_) | Error::Io(_) | Error::Format(_))
    }

    /// True for failures of the linear algebra or the sampler state.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::NotPositiveDefinite(_) | Error::NonFinite(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
