//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Construction or call preconditions violated (dimension mismatch,
    /// non-positive step, empty grid, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The Fourier coefficients cannot certify the lower bound 1 <= phi.
    #[error("potential lower bound violated: offset - sum|amplitude| = {certified_min} < 1")]
    PotentialBelowOne { certified_min: f64 },

    /// A singular value of the sampled force matrix sits too close to the
    /// rank threshold to call the degenerate dimension either way.
    #[error("degenerate rank ambiguous: singular value {value} within a factor 10 of threshold {threshold}")]
    DegenerateRankAmbiguous { value: f64, threshold: f64 },

    /// Verlet step too large for the potential curvature.
    #[error("time step too large: dt = {dt}, dt * max||hess||^(1/2) = {product} > 0.5")]
    StepTooLarge { dt: f64, product: f64 },

    /// Covering construction: candidate zero set exceeds the interval budget.
    #[error("coverage budget exceeded: zero-interval fraction {fraction} > budget {budget}")]
    CoverageBudgetExceeded { fraction: f64, budget: f64 },

    /// Covering construction: every sample fell inside candidate intervals,
    /// so no positive lower bound delta_star exists.
    #[error("no determinant samples outside candidate intervals; delta_star undefined")]
    NoSamplesOutside,

    /// Pre-symmetrization kernel asymmetry beyond the configured threshold.
    #[error("kernel asymmetry {measured} exceeds threshold {threshold} (quadrature too coarse)")]
    AsymmetryExceeded { measured: f64, threshold: f64 },

    /// Velocity-basis Gram matrix condition number too large.
    #[error("Gram matrix ill-conditioned: condition number {cond} > {limit}")]
    GramIllConditioned { cond: f64, limit: f64 },

    /// Entropy requested for a distribution with too much negative mass.
    #[error("negative part too large: fraction {fraction} of total mass")]
    NegativeMass { fraction: f64 },

    /// A conserved quantity drifted during a run that assumed it fixed.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    /// Decay bootstrap fed a norm series that is not decaying.
    #[error("norm series not monotone non-increasing at index {index} (ratio {ratio})")]
    NonMonotone { index: usize, ratio: f64 },

    /// Nonlinear solve produced densities below the negativity tolerance.
    #[error("negative density beyond tolerance: min F = {min}")]
    NegativeDensity { min: f64 },

    /// Snapshot / cache / config decoding failure.
    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
