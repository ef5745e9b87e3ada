//! Sampling-based model predictive control with clustered MPPI and
//! dynamic-obstacle forecasting, plus an experiment harness.

pub mod cluster;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod mppi;
pub mod obstacles;
pub mod planner;
pub mod rng;

pub use error::{Error, Result};
