//! Deterministic one-dimensional solvers for the scaled
//! Vlasov–Poisson–Fokker–Planck system and its aggregation-diffusion limit,
//! with the entropy and modulated-energy functionals that compare them.
//!
//! Numerical kernels are generic over the scalar type; the experiment
//! harness and snapshot format work in `f64`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fields;
pub mod fluid;
pub mod functionals;
pub mod grid;
pub mod harness;
pub mod kinetic;
pub mod scalar;
pub mod snapshot;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SpatialGrid64 = grid::SpatialGrid<f64>;
pub type VelocityGrid64 = grid::VelocityGrid<f64>;
pub type PhaseGrid64 = grid::PhaseGrid<f64>;
pub type ScalingParams64 = kinetic::ScalingParams<f64>;
pub type KineticState64 = kinetic::KineticState<f64>;
pub type FluidState64 = fluid::FluidState<f64>;
pub type DiagnosticsRecord64 = functionals::DiagnosticsRecord<f64>;

pub type SpatialGrid32 = grid::SpatialGrid<f32>;
pub type PhaseGrid32 = grid::PhaseGrid<f32>;
pub type KineticState32 = kinetic::KineticState<f32>;
