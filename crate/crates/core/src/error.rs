use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data or parameters violate a documented invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The variance model evaluates to zero (infinite weight).
    #[error("degenerate variance model: {0}")]
    DegenerateVariance(String),

    /// The weighted normal matrix is singular or numerically unusable.
    #[error("singular design: {0}")]
    SingularDesign(String),

    /// No configuration satisfies the requested constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An estimator left its admissible region.
    #[error("fit failed: {0}")]
    FitFailed(String),

    /// Too many runs of a simulation campaign were unusable.
    #[error("campaign failed: {0}")]
    Campaign(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
