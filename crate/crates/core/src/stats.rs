//! Small distribution helpers shared by the sampler, scoring and summaries.

use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * puruspe::erfc(-x / std::f64::consts::SQRT_2)
}

/// Log density of an inverse gamma with shape `a` and rate (scale) `b`.
pub fn inv_gamma_log_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - puruspe::ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Log density of a gamma with shape `a` and rate `b`.
pub fn gamma_log_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - puruspe::ln_gamma(a) + (a - 1.0) * x.ln() - b * x
}

/// Linear-interpolation sample quantile (R type 7) of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_values() {
        assert!((normal_log_pdf(0.0, 0.0, 1.0) + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((std_normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn gamma_family_values() {
        // exponential(rate 2) at x = 1
        assert!((gamma_log_pdf(1.0, 1.0, 2.0) - (2f64.ln() - 2.0)).abs() < 1e-10);
        // IG(1, 1) at x = 1: e^{-1}
        assert!((inv_gamma_log_pdf(1.0, 1.0, 1.0) + 1.0).abs() < 1e-10);
        assert_eq!(inv_gamma_log_pdf(0.0, 2.1, 10.0), f64::NEG_INFINITY);
    }

    #[test]
    fn type7_quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
    }
}
