//! Identification of distributed time delays in nonlinear delay differential
//! equations from discrete-time measurements.
//!
//! The delay kernel is approximated by a mixed Erlang density, the delayed
//! system is transformed to ODEs with the linear chain trick, and the kernel
//! weights, rate, model parameters, and initial state are estimated by
//! single-shooting least squares with analytic forward sensitivities.

pub mod ddesim;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod ivp;
pub mod kernels;
pub mod lct;
pub mod linalg;
pub mod model;
pub mod models;
pub mod optimize;
pub mod quad;
pub mod sens;

pub use error::{Error, Result};
