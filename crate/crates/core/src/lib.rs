//! Equilibrium stopping regions for time-inconsistent stopping problems on
//! one-dimensional diffusions under non-exponential discounting.

pub mod config;
pub mod equilibrium;
pub mod error;
pub mod mc;
pub mod model;
pub mod quad;
pub mod repro;
pub mod resolvent;
pub mod valuation;

pub use error::{Error, Result};
