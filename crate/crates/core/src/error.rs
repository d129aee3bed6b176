use crate::bundle::FrameId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid interval [{lo}, {hi}]: lower bound must be strictly below upper bound")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("parameter {param} lies outside [{lo}, {hi}]")]
    OutOfInterval { param: f64, lo: f64, hi: f64 },

    #[error("frame mismatch: expected `{expected}`, found `{found}`")]
    FrameMismatch { expected: FrameId, found: FrameId },

    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),

    #[error("ill-conditioned matrix ({context}): condition estimate {condition:e}")]
    IllConditioned { condition: f64, context: String },

    #[error("non-finite value encountered at parameter {param} ({context})")]
    NonFinite { param: f64, context: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("path is not closed: endpoint gap {gap:e}")]
    OpenLoop { gap: f64 },

    #[error("point {point:?} lies outside chart `{chart}`")]
    OutsideChart { point: Vec<f64>, chart: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("derivation is not linear: residual {residual:e} exceeds {tolerance:e}")]
    NotLinear { residual: f64, tolerance: f64 },
}
