//! Optimal decision rules, detection probabilities and KL error exponents
//! for one-way and interactive tandem fusion of two Gaussian sensors.

pub mod asymptotic;
pub mod cli;
pub mod error;
pub mod extensions;
pub mod fixed_sample;
pub mod gaussian_model;
pub mod montecarlo;
pub mod quadrature;
pub mod search;

pub use error::{FusionError, Result};
pub use gaussian_model::{GaussianModel, Hypothesis, Sensor, Threshold};
