//! One error type for the whole crate. Variants mirror the failure modes of
//! the public operations; anything that would silently produce NaN/Inf is
//! surfaced as [`Error::NonFinite`] instead.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are inconsistent with the operation's contract.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An operation produced (or was handed) NaN or infinity.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Discretization requires strictly positive step sizes.
    #[error("discretization step must be strictly positive (delta[{index}] = {value})")]
    NonPositiveDelta { index: usize, value: f64 },

    /// Discretization requires a strictly negative (stable) diagonal A.
    #[error("state matrix must be strictly negative (a[{index}] = {value})")]
    NonNegativeA { index: usize, value: f64 },

    /// The convolutional kernel form only exists for time-invariant systems.
    #[error("kernel form requested for time-varying parameters ({0})")]
    TimeVaryingParams(String),

    /// DBM splits the inner width in half, so it must be even.
    #[error("DBM requires an even inner width, got E*D = {0}")]
    OddInnerWidth(usize),

    /// Space-time flattening needs at least one frame and one spatial token.
    #[error("video must have at least one frame and one spatial token (T={t}, P={p})")]
    EmptyVideo { t: usize, p: usize },

    /// A sequence does not match the layout that claims to describe it.
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    /// Slope fitting needs enough spread-out measurements to be meaningful.
    #[error("insufficient points for {operator}: {detail}")]
    InsufficientPoints { operator: String, detail: String },

    /// A parameter-count ratio deviates from its expected value.
    #[error("parameter ratio mismatch for {block}: expected {expected}, got {actual}")]
    RatioMismatch {
        block: String,
        expected: String,
        actual: String,
    },

    /// The toy trainer hit NaN/Inf loss.
    #[error("training diverged at step {step}")]
    DivergedLoss { step: usize },

    /// A golden vector failed verification.
    #[error("golden mismatch in `{tensor}`: {detail}")]
    GoldenMismatch { tensor: String, detail: String },

    /// Bad CLI/config input.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for validation problems, 3 for
    /// acceptance-style check failures (ratio/golden/divergence).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RatioMismatch { .. } | Error::GoldenMismatch { .. } | Error::DivergedLoss { .. } => 3,
            _ => 2,
        }
    }
}
