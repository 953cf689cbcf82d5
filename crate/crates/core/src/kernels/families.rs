//! Correlation functions of the catalog families. Every function here equals 1 at zero lag.

use super::matern::matern_unchecked;
use super::series::{cos_exp_closed, cosh_series_closed};
use super::spec::{Family, KernelSpec};
use crate::geometry::LagTriple;

// Dimension of the "spatial" argument in the Gneiting-type displays.
const CIRCLE_DIM: f64 = 1.0;
const PLANE_DIM: f64 = 2.0;

pub(crate) fn correlation(spec: &KernelSpec, lag: &LagTriple) -> f64 {
    let p = spec.values();
    let LagTriple { h, theta, u } = *lag;
    match spec.family() {
        Family::MaternTime => matern_unchecked(u, p[0], p[1]),
        Family::MaternCircle => matern_unchecked(theta, p[0], p[1]),
        Family::MaternSpace => matern_unchecked(h, p[0], p[1]),
        Family::CircPowExp => (-(theta / p[0]).powf(p[1])).exp(),
        Family::CircCauchy => (1.0 + (theta / p[0]).powf(p[1])).powf(-p[2]),
        Family::InvGneitingExp => {
            let [c_s, c_t, alpha, beta, gamma, delta] = [p[0], p[1], p[2], p[3], p[4], p[5]];
            let g = 1.0 + (theta / c_s).powf(alpha);
            let scaled = (u / c_t).powf(2.0 * gamma) / g.powf(beta * gamma);
            g.powf(-(delta + beta / 2.0)) * (-scaled).exp()
        }
        Family::InvGneitingCauchy => {
            let [c_s, c_t, alpha, beta, gamma, delta, lambda] =
                [p[0], p[1], p[2], p[3], p[4], p[5], p[6]];
            let g = 1.0 + (theta / c_s).powf(alpha);
            let scaled = (u / c_t).powf(2.0 * gamma) / g.powf(beta * gamma);
            g.powf(-(delta + beta / 2.0)) * (1.0 + scaled).powf(-lambda)
        }
        Family::WhiteExp => {
            let [c_s, c_t, alpha, beta, gamma, delta] = [p[0], p[1], p[2], p[3], p[4], p[5]];
            let g = 1.0 + (u / c_t).powf(alpha);
            let scaled = (theta / c_s).powf(gamma) / g.powf(beta * gamma);
            g.powf(-(delta + beta * CIRCLE_DIM / 2.0)) * (-scaled).exp()
        }
        Family::WhiteCauchy => {
            let [c_s, c_t, alpha, beta, gamma, delta, lambda] =
                [p[0], p[1], p[2], p[3], p[4], p[5], p[6]];
            let g = 1.0 + (u / c_t).powf(alpha);
            let scaled = (theta / c_s).powf(gamma) / g.powf(beta * gamma);
            g.powf(-(delta + beta * CIRCLE_DIM / 2.0)) * (1.0 + scaled).powf(-lambda)
        }
        Family::SinhSeries => {
            let gamma_u = variogram_power(u, p[0], p[1], p[2]);
            cosh_series_closed(theta, gamma_u) / cosh_series_closed(0.0, 1.0)
        }
        Family::CosExpCauchy => {
            let rho = (1.0 + (u / p[0]).powf(p[1])).powf(-p[2]);
            cos_exp_closed(theta, rho)
        }
        Family::CosExpPowexp => cos_exp_closed(theta, powexp_rho(u, p[0], p[1])),
        Family::GneitingSpaceTimeCauchy => {
            gneiting_cauchy(h, u, p[0], p[1], p[2], p[3], p[4], p[5], p[6])
        }
        Family::ShirotaSpaceCircle => {
            gneiting_cauchy(h, theta, p[0], p[1], p[2], p[3], p[4], p[5], p[6])
        }
        Family::Model1Separable => (-h / p[0] - theta / p[1] - u / p[2]).exp(),
        Family::Model7Final => {
            let rho = powexp_rho(u, p[1], p[2]);
            (rho * theta.cos() - h / p[0] - 1.0).exp() * (rho * theta.sin()).cos()
        }
        Family::Product => spec
            .members()
            .iter()
            .map(|m| correlation(m, lag))
            .product(),
    }
}

/// `[1 + (u/c_t)^α]^β`
pub(crate) fn variogram_power(u: f64, c_t: f64, alpha: f64, beta: f64) -> f64 {
    (1.0 + (u / c_t).powf(alpha)).powf(beta)
}

fn powexp_rho(u: f64, c_t: f64, alpha: f64) -> f64 {
    (-(u / c_t).powf(alpha)).exp()
}

#[allow(clippy::too_many_arguments)]
fn gneiting_cauchy(
    h: f64,
    s: f64,
    c_s: f64,
    c_t: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    lambda: f64,
) -> f64 {
    let g = 1.0 + (s / c_t).powf(alpha);
    let scaled = (h / c_s).powf(2.0 * gamma) / g.powf(beta * gamma);
    g.powf(-(delta + beta * PLANE_DIM / 2.0)) * (1.0 + scaled).powf(-lambda)
}
