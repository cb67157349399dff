//! Event-driven simulation of zero-range processes in i.i.d. random
//! environments, with the couplings and exact checks used to study
//! condensation and escape of mass.
//!
//! The numerical core is generic over the scalar type ([`Scalar`]: `f32` or
//! `f64`); the exact stationary solver additionally runs over any [`Field`],
//! including `BigRational`. The aliases below fix `f64`, which is what the
//! experiments and the CLI use.

pub mod coupling;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod measures;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod walkers;

pub use dynamics::{Configuration, GraphicalEvent, Occupancy};
pub use error::{Error, Result};
pub use scalar::{Field, Scalar};

pub type JumpKernel = environment::JumpKernel<f64>;
pub type EnvDistribution = environment::EnvDistribution<f64>;
pub type RateField = environment::RateField<f64>;
pub type LazyEnvironment = environment::LazyEnvironment<f64>;
pub type RateFunction = measures::RateFunction<f64>;
pub type MarginalLaw = measures::MarginalLaw<f64>;
pub type EventStream = dynamics::EventStream<f64>;
