use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid too large for the Cholesky oracle: n_steps = {n_steps} exceeds bound {bound}")]
    GridTooLarge { n_steps: usize, bound: usize },

    #[error("increment covariance is not positive definite (pivot {pivot} = {value:.3e}); H may be out of range or the factorization broke down")]
    CovarianceNotPsd { pivot: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empirical measures have unequal support sizes: {left} vs {right}")]
    UnequalSupport { left: usize, right: usize },

    #[error("exact transport instance too large: N = {n} exceeds bound {bound}")]
    InstanceTooLarge { n: usize, bound: usize },

    #[error("non-finite coefficient evaluation at t = {t}: {detail}")]
    InvalidEvaluation { t: f64, detail: String },

    #[error("averaging window [{start}, {end}] extends beyond the coefficient time domain {domain}")]
    WindowBeyondDomain { start: f64, end: f64, domain: f64 },

    #[error("state exploded at step {step} (t = {t}), scenario {scenario}, particle {particle}")]
    Explosion {
        step: usize,
        t: f64,
        scenario: usize,
        particle: usize,
    },

    #[error("Hurst parameter H = {h} is not in the paper regime (requires H > 1/2) but paper-regime enforcement is on")]
    PaperRegimeViolation { h: f64 },

    #[error("fast system under-resolved: dt = {dt:.3e} exceeds epsilon/10 = {limit:.3e}")]
    UnderResolved { dt: f64, limit: f64 },

    #[error("driver fingerprint mismatch: {left:#x} vs {right:#x}; bundles are not coupled")]
    DriverMismatch { left: u64, right: u64 },

    #[error("partition block of length {block:.3e} is shorter than two grid steps (dt = {dt:.3e})")]
    BlockTooShort { block: f64, dt: f64 },

    #[error("increment gap of {gap} steps exceeds the grid horizon ({n_steps} steps)")]
    GapExceedsHorizon { gap: usize, n_steps: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
