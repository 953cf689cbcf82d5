//! Covariance catalog for space × circle × time.
//!
//! A [`KernelSpec`] is evaluated on a [`LagTriple`] `(h, θ, u)` and returns
//! `σ² · ρ(h, θ, u)` where `ρ` is the family correlation. Families that ignore
//! a lag component are constant in it, and [`Family::Product`] multiplies its
//! members' correlations.

mod families;
mod gram;
mod matern;
mod series;
mod spec;
mod validate;

pub mod catalog;

pub use gram::{gram, GramMatrix};
pub use matern::matern;
pub use series::{
    cos_exp_closed, cosh_series_closed, series_oracle_i, series_oracle_ii, sinh_form_as_printed,
};
pub use spec::{Bound, Family, FreeParam, KernelSpec, LagUse, ParamDef};
pub use validate::{
    random_valid_params, validate_psd, validate_psd_with, DesignOutcome, PsdReport,
    PSD_RELATIVE_TOLERANCE,
};

use crate::error::Result;
use crate::geometry::LagTriple;

/// Anything that yields a covariance for a lag triple.
pub trait Covariance: Sync {
    /// Covariance at a lag already known to lie in the domain.
    fn covariance(&self, lag: &LagTriple) -> f64;

    fn variance(&self) -> f64 {
        self.covariance(&LagTriple::ZERO)
    }
}

impl Covariance for KernelSpec {
    fn covariance(&self, lag: &LagTriple) -> f64 {
        self.sigma2() * families::correlation(self, lag)
    }
}

impl KernelSpec {
    /// `σ²·ρ(lag)` after checking the lag lies in `[0,∞) × [0,π] × [0,∞)`.
    pub fn eval(&self, lag: &LagTriple) -> Result<f64> {
        lag.validate()?;
        Ok(self.covariance(lag))
    }

    pub fn correlation(&self, lag: &LagTriple) -> f64 {
        families::correlation(self, lag)
    }
}
