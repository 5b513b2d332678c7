use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// ρ + η = 1: the metric carries no information about α.
    #[error("estimator undefined: rho + eta = 1 (rho = {rho}, eta = {eta})")]
    UndefinedEstimator { rho: f64, eta: f64 },

    /// Underflow, non-finite values or a non-monotone CDF.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A caller broke a documented precondition (e.g. unnormalized input).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate rating for ({input_id}, {output_id}, {system_id}, {rater}) at line {line}")]
    DuplicateKey {
        input_id: String,
        output_id: String,
        system_id: String,
        rater: String,
        line: u64,
    },

    /// The caller withdrew the request before the computation finished.
    #[error("computation cancelled")]
    Cancelled,

    #[error("not found: {0}")]
    NotFound(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for failures of the numerical machinery rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::UndefinedEstimator { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
