//! Quasi-periodic space-time Gaussian processes.
//!
//! Covariance kernels on plane × circle × line, nearest-neighbor (Vecchia)
//! approximations, a Metropolis-within-Gibbs sampler, posterior prediction,
//! proper scoring rules and ozone exceedance / respiratory risk summaries.

pub mod compliance;
pub mod data;
pub mod error;
pub mod geometry;
pub mod hull;
pub mod inference;
pub mod kernels;
pub mod nngp;
pub mod predict;
pub mod scoring;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
