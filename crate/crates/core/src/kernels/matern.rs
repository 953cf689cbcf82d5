use crate::error::{Error, Result};

/// Matérn correlation `2^{1-ν}/Γ(ν) (t/α)^ν K_ν(t/α)`.
///
/// Half-integer orders 1/2, 3/2 and 5/2 use their elementary closed forms.
pub fn matern(t: f64, scale: f64, nu: f64) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid_param("scale", scale, "must be > 0"));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::invalid_param("nu", nu, "must be > 0"));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("matern lag {t} must be >= 0")));
    }
    Ok(matern_unchecked(t, scale, nu))
}

pub(crate) fn matern_unchecked(t: f64, scale: f64, nu: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = t / scale;
    if nu == 0.5 {
        return (-x).exp();
    }
    if nu == 1.5 {
        return (1.0 + x) * (-x).exp();
    }
    if nu == 2.5 {
        return (1.0 + x + x * x / 3.0) * (-x).exp();
    }
    let log_norm = (1.0 - nu) * std::f64::consts::LN_2 - puruspe::ln_gamma(nu);
    if x > 600.0 {
        // large-argument expansion; the Bessel I recurrence overflows here
        let mu = 4.0 * nu * nu;
        let series = 1.0 + (mu - 1.0) / (8.0 * x) + (mu - 1.0) * (mu - 9.0) / (128.0 * x * x);
        let log_k = 0.5 * (std::f64::consts::PI / (2.0 * x)).ln() - x + series.ln();
        return (log_norm + nu * x.ln() + log_k).exp();
    }
    let (_, k) = puruspe::Inu_Knu(nu, x);
    if k == 0.0 {
        return 0.0;
    }
    (log_norm + nu * x.ln() + k.ln()).exp().min(1.0)
}
