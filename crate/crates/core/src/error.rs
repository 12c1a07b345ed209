use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("negative density {value:e} at cell {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("mass mismatch: {a} vs {b}")]
    MassMismatch { a: f64, b: f64 },

    #[error("CFL violation in {direction}: dt = {dt:e} exceeds limit {limit:e} (index {index})")]
    Cfl {
        direction: &'static str,
        dt: f64,
        limit: f64,
        index: usize,
    },

    #[error("initial velocity {value} exceeds half the velocity extent {v_max} at cell {index}")]
    VelocityOutOfRange { index: usize, value: f64, v_max: f64 },

    #[error("boundary mass {fraction:e} of total exceeds {limit:e} at t = {t}")]
    BoundaryMass { t: f64, fraction: f64, limit: f64 },

    #[error("positivity lost: min value {value:e} at flat index {index}")]
    Positivity { index: usize, value: f64 },

    #[error("velocity kernel width {width:e} below grid spacing {dv:e} at t = {t}")]
    UnderResolved { t: f64, width: f64, dv: f64 },

    #[error("rate fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("snapshot format: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
