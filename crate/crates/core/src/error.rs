use thiserror::Error;

#[derive(Debug, Error)]
pub enum KamError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("singular matrix (|det| = {det:e}) at grid point {at:?}")]
    Singular { det: f64, at: Vec<f64> },

    #[error("resonant frequency: |<m,ω>| < 1e-14 at m = {0:?}")]
    ResonantFrequency(Vec<i64>),

    #[error("step size too large: local error estimate {estimate:e} exceeds {tolerance:e}")]
    StepSize { estimate: f64, tolerance: f64 },

    #[error("map is not 1-periodic: odd-mode mass {0:e}")]
    Periodicity(f64),

    #[error("parabolic constant matrix: resonance removal needs a diagonalizable elliptic part")]
    Parabolic,

    #[error("smallness gate failed: ε = {eps:e} exceeds {bound:e} ({gate})")]
    GateFailed { eps: f64, bound: f64, gate: String },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
}

pub type Result<T> = std::result::Result<T, KamError>;
