use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dataset needs at least {required} points, got {actual}")]
    TooFewPoints { required: usize, actual: usize },

    #[error("non-finite coordinate in point {index}: ({x}, {y})")]
    NonFinitePoint { index: usize, x: f64, y: f64 },

    #[error("all x values are equal; the slope is not identified")]
    ZeroXVariance,

    #[error("slope multiset is empty")]
    EmptySlopes,

    #[error("bin is empty")]
    EmptyBin,

    #[error("bin sizes {lower} and {upper} are not floor(n/2) and ceil(n/2)")]
    BinSizeMismatch { lower: usize, upper: usize },

    #[error("median slope is not finite ({0})")]
    NonFiniteMedian(f64),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("point {y} lies outside the output range [-{range}, {range}]")]
    OutsideRange { y: f64, range: f64 },

    #[error(
        "target quantiles ({lower_q:.6}, {upper_q:.6}) leave (0, 1): b + t = {spread:.6} is too wide; \
         increase n or epsilon, or relax p"
    )]
    QuantileOutOfRange {
        lower_q: f64,
        upper_q: f64,
        spread: f64,
    },

    #[error("need at least {required} trials for the requested quantile, have {actual}")]
    InsufficientTrials { required: usize, actual: usize },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}

/// Checks `value` is finite and strictly positive.
pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(name, value, "must be finite and > 0"))
    }
}

/// Checks `value` lies strictly inside (0, 1).
pub(crate) fn open_unit(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::invalid(name, value, "must lie in (0, 1)"))
    }
}
