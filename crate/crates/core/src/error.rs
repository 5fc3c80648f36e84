use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("alice vector has zero variance")]
    VarZero,

    #[error("degenerate affine fit: {0}")]
    FitDegenerate(String),

    #[error("shot-noise intercept is not positive ({0})")]
    ShotNonPositive(f64),

    #[error("unphysical state: {0}")]
    UnphysicalState(String),

    #[error("{0} is not supported")]
    Unsupported(&'static str),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable label.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParam { .. } => "INVALID_PARAM",
            Error::LengthMismatch { .. } => "LENGTH_MISMATCH",
            Error::TooFewSamples { .. } => "TOO_FEW_SAMPLES",
            Error::VarZero => "VAR_ZERO",
            Error::FitDegenerate(_) => "FIT_DEGENERATE",
            Error::ShotNonPositive(_) => "SHOT_NONPOSITIVE",
            Error::UnphysicalState(_) => "UNPHYSICAL_STATE",
            Error::Unsupported(_) => "UNSUPPORTED",
        }
    }
}
