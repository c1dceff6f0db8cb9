//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building or running a problem.
#[derive(Debug, Error)]
pub enum Error {
    /// Volatility band parameters out of range (non-finite, non-positive,
    /// or lower bound above upper bound).
    #[error("invalid volatility band: {0}")]
    InvalidBand(String),

    /// A catalog function was built with the wrong parameter arity or
    /// non-finite parameters.
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    /// Grid construction violated a structural or stability constraint.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A problem failed structural validation (component counts, declared
    /// constants, ordering conditions).
    #[error("validation failed: {0}")]
    Validation(String),

    /// Inputs outside the domain an operation is defined on (times beyond
    /// the horizon, mismatched time grids, non-finite data).
    #[error("domain error: {0}")]
    Domain(String),

    /// Cylinder functionals are evaluated by one-dimensional gluing and
    /// support at most two monitoring times.
    #[error("unsupported arity: cylinder evaluation handles at most 2 monitoring times, got {0}")]
    UnsupportedArity(usize),

    /// Explicit penalty stepping requires dt*m <= 1.
    #[error("penalty level too stiff for the time grid: dt*m = {0:.6} > 1; refine the time grid or lower the penalty level")]
    PenaltyCfl(f64),

    /// A scenario control is malformed or leaves the admissible band.
    #[error("invalid scenario control: {0}")]
    Control(String),

    /// The Picard map failed to contract on the current slab width.
    #[error("slab too wide: contraction factor {factor:.4} exceeds target {target:.4} after {sweeps} sweeps")]
    SlabTooWide {
        factor: f64,
        target: f64,
        sweeps: usize,
    },

    /// Config file could not be parsed or is internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
