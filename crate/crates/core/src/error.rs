use thiserror::Error;

/// Errors raised by the estimator and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate bandwidth: all samples are identical")]
    DegenerateBandwidth,

    #[error("invalid bandwidth {0}: must be positive and finite")]
    InvalidBandwidth(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty sample pool: {0}")]
    EmptyPool(&'static str),

    #[error("no paired samples but beta = {0} > 0")]
    NoPairedSamples(f64),

    #[error("no unpaired samples but beta = {0} < 1")]
    NoUnpairedSamples(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular H; increase lambda")]
    SingularSystem,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("insufficient paired samples for CV: need at least 4, got {0}")]
    InsufficientCvSamples(usize),

    #[error("anchor conflict: {0}")]
    AnchorConflict(String),

    #[error("unknown dataset kind: {0}")]
    UnknownKind(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical routines (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem | Error::NonFinite(_) | Error::DegenerateBandwidth
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
