use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("rational resonance within cutoff at k = {k:?}")]
    Resonance { k: Vec<i64> },

    #[error("operator is not positive definite (lowest eigenvalue {min_eigenvalue:e})")]
    Positivity { min_eigenvalue: f64 },

    #[error("shift is within {distance:e} of the spectrum")]
    NearSingular { distance: f64 },

    #[error("resolvent spans only {decades:.1} decades; widen the window")]
    WidenWindow { decades: f64 },

    #[error("quadrature tolerance not met: achieved {achieved:e} (estimate {estimate})")]
    Precision { achieved: f64, estimate: f64 },

    #[error("light cone needs half-width {required}, window has {available}")]
    Window { required: usize, available: usize },

    #[error("trajectory contaminated by the boundary at t = {time} (edge/peak = {ratio:e})")]
    ContaminatedTrajectory { time: f64, ratio: f64 },

    #[error("insufficient data: {got} points, need at least {need}")]
    InsufficientData { got: usize, need: usize },

    #[error("trajectory was recorded in storage-lean mode; full states are required")]
    MissingStates,

    #[error("cache file {path}: {reason}")]
    CacheFormat { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
