use thiserror::Error;

/// Errors produced by model construction, estimation and the command layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("covariance is singular (sigma_r^2 = 0)")]
    SingularCovariance,

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("Fisher information is singular (BF - D^2 = {det:e}); reply delays must not be constant")]
    SingularInformation { det: f64 },

    #[error("reply delays must be pairwise distinct (d_{index} = 0)")]
    RepeatedDelay { index: usize },

    #[error("drift estimate {alpha:e} must be positive")]
    NonPositiveDrift { alpha: f64 },

    /// `BE - CD` vanished relative to `CF - DE`; the delay ratio is undefined.
    #[error("degenerate drift estimate (alpha2 = {alpha2:e}): delay estimate undefined")]
    DegenerateDrift { alpha2: f64 },

    #[error("offset estimation unavailable: the TOA estimate t_a_hat was not reported")]
    MissingToa,

    #[error("config error: {0}")]
    Config(String),

    #[error("observation file error: {0}")]
    Observations(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
