//! Queue-length estimation at signalized intersections from partially
//! observed queues: exact Negative Hypergeometric conditional distributions
//! built on probe-vehicle positions and join times, parametric and delay-based
//! baselines, a slot-level traffic simulator and a seeded evaluation harness.

pub mod cli;
pub mod combinatorics;
pub mod config;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use estimators::{Estimate, EstimatorId};
