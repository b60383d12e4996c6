//! Error types shared across the solver, diagnostics and I/O layers.

use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Error)]
pub enum CvefError {
    /// Physical or numerical parameters violate their invariants.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A density field has a non-positive sample.
    #[error("non-positive density: min sample {min:.6e}")]
    NonPositiveDensity { min: f64 },

    /// The initial-condition deformation map is not orientation preserving.
    #[error("deformation map not invertible: min det(I + grad phi) = {min_det:.6e}")]
    MapNotInvertible { min_det: f64 },

    /// The advective CFL bound was exceeded.
    #[error("CFL violation: max|u| dt / h = {cfl:.4e} exceeds limit {limit}")]
    CflViolation { cfl: f64, limit: f64 },

    /// A transport step produced a non-positive density.
    #[error("density positivity lost: min rho = {min_rho:.6e}")]
    PositivityLost { min_rho: f64 },

    /// The fixed-point iteration diverged or ran out of sweeps.
    #[error("fixed-point iteration did not converge after {iterations} sweeps (last distance {last_distance:.4e})")]
    NonConvergence {
        iterations: usize,
        last_distance: f64,
    },

    /// A time-series diagnostic was given too few states.
    #[error("insufficient history: needed {needed}, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    /// A manufactured solution was queried outside its validity window.
    #[error("time {t} outside validity window [0, {t_max}]")]
    OutOfWindow { t: f64, t_max: f64 },

    /// Fields on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Configuration file problem; the message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    /// A snapshot file failed to parse.
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),

    /// An I/O failure with the path that caused it.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A time-marching error with the step at which it occurred.
    #[error("at step {step} (t = {t:.6}): {source}")]
    AtStep {
        step: usize,
        t: f64,
        #[source]
        source: Box<CvefError>,
    },
}

pub type Result<T> = std::result::Result<T, CvefError>;

impl CvefError {
    /// Wrap an error with the time-step index that produced it.
    pub fn at_step(self, step: usize, t: f64) -> Self {
        CvefError::AtStep {
            step,
            t,
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping step context.
    pub fn root(&self) -> &CvefError {
        match self {
            CvefError::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}
