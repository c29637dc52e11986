use thiserror::Error;

/// Errors raised by the solver and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("profile does not vanish at r = 1 (max |value| = {0:e})")]
    BoundaryViolation(f64),
    #[error("point outside the cylinder: {0}")]
    OutOfDomain(String),
    #[error("mode index {k} outside 0..={k_max}")]
    ModeOutOfRange { k: usize, k_max: usize },
    #[error("singular saddle-point operator (k_eff = {k_eff}, z-wavenumber index {q})")]
    SingularOperator { k_eff: f64, q: usize },
    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e} set by mode {mode}")]
    Cfl { dt: f64, limit: f64, mode: usize },
    #[error("divergence drift not recovered after {0} consecutive projections")]
    DivergenceDrift(usize),
    #[error("energy blow-up: {energy:e} exceeds 10x the initial {initial:e}")]
    BlowUp { energy: f64, initial: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("history: {0}")]
    History(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid exponent p = {0}")]
    InvalidExponent(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
