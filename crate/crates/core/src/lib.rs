//! Simulation and estimation toolkit for evaluating non-pharmaceutical
//! interventions in epidemic panels with SIRD-driven outcomes.

pub mod aggregation;
pub mod cases;
pub mod econ;
pub mod error;
pub mod features;
pub mod inference;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod panel_io;
pub mod propensity;
pub mod rng;
pub mod scenario;
pub mod sird;

pub use error::{Error, Result};
