use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// The first group are parameter rejections produced by validation; the rest
/// are numerical or domain failures raised by the evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("NonPositiveParameter: `{name}` must be > 0, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("ElasticityOutOfRange: k must satisfy 1/2 <= k < 1, got {k}")]
    ElasticityOutOfRange { k: f64 },

    #[error("FellerViolationAtHalf: k = 1/2 requires 2a >= sigma^2, got 2a = {two_a}, sigma^2 = {sigma_sq}")]
    FellerViolationAtHalf { two_a: f64, sigma_sq: f64 },

    #[error("DomainError: {what} requires a positive argument, got {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ConvergenceFailure: {what} did not converge within {terms} terms")]
    ConvergenceFailure { what: &'static str, terms: usize },

    #[error("NormalizationFailure: {0}")]
    NormalizationFailure(String),

    #[error("QuadratureFailure: {0}")]
    Quadrature(#[from] crate::quad::QuadError),

    #[error("Inconclusive: {0}")]
    Inconclusive(String),

    #[error("OverflowToZeroOrInf: log M = {log_m} is outside the double range")]
    Overflow { log_m: f64 },

    #[error("overflow fraction {fraction:.4} exceeds the 1% limit")]
    OverflowFraction { fraction: f64 },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// True for rejections of the model parameters themselves.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonPositiveParameter { .. }
                | Error::ElasticityOutOfRange { .. }
                | Error::FellerViolationAtHalf { .. }
        )
    }

    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        Error::Domain { what, value }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
