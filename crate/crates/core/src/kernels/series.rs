//! Cosine-series expansions on the circle and their closed forms.
//!
//! Both circular-linear families built from a cosine series are checked
//! against a direct partial sum of that series. The partial sums here are
//! deliberately naive so they stay independent of the closed forms.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `e^{-1} Σ_{k=0}^{terms} ρ^k cos(kθ) / k!`.
pub fn series_oracle_ii(theta: f64, rho: f64, terms: usize) -> Result<f64> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::invalid_param(
            "rho",
            rho,
            "expansion requires |rho| <= 1",
        ));
    }
    if terms < 1 {
        return Err(Error::InvalidInput("terms must be >= 1".into()));
    }
    let mut sum = 0.0;
    let mut coef = 1.0; // ρ^k / k!
    for k in 0..=terms {
        if k > 0 {
            coef *= rho / k as f64;
        }
        sum += coef * (k as f64 * theta).cos();
    }
    Ok(sum * (-1f64).exp())
}

/// `Σ_{k=0}^{terms} cos(kθ) / (k² + γ)`.
pub fn series_oracle_i(theta: f64, gamma: f64, terms: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid_param("gamma", gamma, "must be > 0"));
    }
    let mut sum = 0.0;
    for k in 0..=terms {
        let k = k as f64;
        sum += (k * theta).cos() / (k * k + gamma);
    }
    Ok(sum)
}

/// `e^{ρ cos θ - 1} cos(ρ sin θ)`: the full sum of [`series_oracle_ii`].
pub fn cos_exp_closed(theta: f64, rho: f64) -> f64 {
    (rho * theta.cos() - 1.0).exp() * (rho * theta.sin()).cos()
}

/// Closed form of `Σ_{k≥0} cos(kθ)/(k² + γ)` for `θ ∈ [0, 2π]`:
/// `1/(2γ) + π cosh(√γ(π-θ)) / (2√γ sinh(√γ π))`.
///
/// The hyperbolic ratio is evaluated as
/// `e^{-aθ} (1 + e^{-2a(π-θ)}) / (1 - e^{-2aπ})`, which never overflows.
pub fn cosh_series_closed(theta: f64, gamma: f64) -> f64 {
    let a = gamma.sqrt();
    let ratio = if a * PI <= 30.0 {
        (a * (PI - theta)).cosh() / (a * PI).sinh()
    } else {
        (-a * theta).exp() * (1.0 + (-2.0 * a * (PI - theta)).exp()) / -(-2.0 * a * PI).exp_m1()
    };
    0.5 / gamma + PI * ratio / (2.0 * a)
}

/// The closed form as printed alongside the series: `1/γ + (π/2) sinh(√γ(π-θ))/sinh(√γπ)`.
///
/// Kept only so tests can show it disagrees with the series it is derived from.
pub fn sinh_form_as_printed(theta: f64, gamma: f64) -> f64 {
    let a = gamma.sqrt();
    1.0 / gamma + 0.5 * PI * (a * (PI - theta)).sinh() / (a * PI).sinh()
}
