//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration or construction arguments.
    #[error("configuration error: {0}")]
    Config(String),

    /// Inconsistent vector/matrix dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Requested frequency cannot be represented at the model's sampling time.
    #[error("frequency {omega} rad/s is outside [0, {nyquist}) rad/s for this sampling time")]
    FrequencyOutOfRange { omega: f64, nyquist: f64 },

    /// Frequency response evaluated at (or numerically on top of) a pole.
    #[error("frequency response singular at {omega} rad/s (pole on the evaluation point)")]
    Singular { omega: f64 },

    /// Transfer function is identically zero.
    #[error("degenerate transfer function: {0}")]
    Degenerate(String),

    /// System has an unstable inverse.
    #[error("non-minimum-phase system: {0}")]
    NonMinimumPhase(String),

    /// Signal estimation failed (no excitation, window too short, ...).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Factorization failed even after the jitter escalation policy.
    #[error("ill-conditioned data: {0}")]
    IllConditioned(String),

    /// Trajectory generation or ingestion failed.
    #[error("trajectory error: {0}")]
    Trajectory(String),

    /// A probe experiment failed inside the selection loop.
    #[error("probe failed at iteration {iteration} for {system}: {source}")]
    Probe {
        iteration: usize,
        system: String,
        #[source]
        source: Box<CoreError>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
