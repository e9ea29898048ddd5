//! Crate-wide error type.

/// Errors shared by all modules.
///
/// Construction errors (bad grids, tables, parameters) are reported eagerly;
/// evolution errors (`TimeStepTooLarge`, `PositivityLoss`, ...) are returned
/// by the steppers so a driver can attach step context before aborting.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("boundary condition does not fit grid: {0}")]
    BoundaryMismatch(String),

    #[error("{quantity} must be positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },

    #[error("{quantity} is negative at entry {index}: {value}")]
    NegativeValue {
        quantity: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{quantity} = {value} outside working range [{lo}, {hi}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("time step {dt} exceeds stability bound {bound}")]
    TimeStepTooLarge { dt: f64, bound: f64 },

    #[error("state left the admissible range at cell {cell}: {value}")]
    PositivityLoss { cell: usize, value: f64 },

    #[error("single-site partition function diverges at fugacity {fugacity}")]
    DivergentPartition { fugacity: f64 },

    #[error("target profile carries no probability: {0}")]
    UnreachableTarget(String),

    #[error("velocity grid too narrow: relative mass deficit {deficit:.3e}")]
    GridTooNarrow { deficit: f64 },

    #[error("moment matching failed: {0}")]
    MomentMatching(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
