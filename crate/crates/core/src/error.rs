use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The summand series of a CUSUM test is constant, or its long-run variance
    /// estimate is zero, so the studentized statistic is undefined.
    #[error("degenerate variance: {reason}")]
    DegenerateVariance {
        reason: String,
        /// Un-studentized statistic, when it could still be computed.
        raw_statistic: Option<f64>,
    },

    #[error("dimension guard: order h = {h} exceeds the limit {limit} for matrix-valued estimates (set the override flag to lift it)")]
    DimensionGuard { h: usize, limit: usize },

    #[error("target {target} is outside the achievable range [{low}, {high}]")]
    OutOfRange { target: f64, low: f64, high: f64 },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate dates: {}", .0.join(", "))]
    DuplicateDates(Vec<String>),

    #[error("the two series share no timestamps")]
    EmptyIntersection,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
