use thiserror::Error;

use crate::Point;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HblError {
    #[error("non-finite point")]
    NonFinite,
    #[error("inverse unavailable")]
    InverseUnavailable,
    #[error("non-invertible")]
    NonInvertible,
    #[error("zero vector")]
    ZeroVector,
    #[error("orbit escaped at index {index}")]
    Escaped { index: usize },
    #[error("no real fixed points")]
    NoRealFixedPoints,
    #[error("newton did not converge (last iterate ({}, {}))", last.x, last.y)]
    NewtonFailed { last: Point },
    #[error("non-hyperbolic orbit")]
    NonHyperbolic,
    #[error("exponents not hyperbolic")]
    ExponentsNotHyperbolic,
    #[error("not a saddle")]
    NonSaddle,
    #[error("not in bounded set (backward escape at step {index})")]
    NotInBoundedSet { index: usize },
    #[error("bracket invalid: g({a_lo}) = {g_lo}, g({a_hi}) = {g_hi}")]
    BracketInvalid { a_lo: f64, a_hi: f64, g_lo: f64, g_hi: f64 },
    #[error("fold vertex not found: {0}")]
    FoldNotFound(String),
    #[error("missing arc: {0}")]
    MissingArc(String),
    #[error("polyline needs at least 3 vertices")]
    TooFewVertices,
    #[error("no critical point on segment")]
    NoCriticalPoint,
    #[error("uniqueness violated ({roots} roots)")]
    UniquenessViolated { roots: usize },
    #[error("unbounded bound period (escape at step {index})")]
    UnboundedBoundPeriod { index: usize },
    #[error("bound period cap {cap} reached")]
    BoundPeriodCap { cap: usize },
    #[error("pairing failed: {0}")]
    PairingFailed(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("bounded set too thin after {attempts} attempts")]
    BoundedSetTooThin { attempts: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, HblError>;
