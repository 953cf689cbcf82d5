//! Ready-made kernels: the seven comparison models and one default per family.

use super::spec::{Family, KernelSpec};

/// Posterior means reported for the final space-circle-time model.
pub const TABLE2_C_S: f64 = 22.32;
pub const TABLE2_C_T: f64 = 86.90;
pub const TABLE2_ALPHA: f64 = 0.674;
pub const TABLE2_SIGMA2: f64 = 2.098;
pub const TABLE2_TAU2: f64 = 0.0947;
/// Intercept, relative humidity and temperature coefficients.
pub const TABLE2_BETA: [f64; 3] = [7.3943, -0.0207, 0.1129];

fn k(family: Family, params: &[(&str, f64)]) -> KernelSpec {
    KernelSpec::new(family, params, 1.0).expect("catalog parameters are valid")
}

fn exp_time(c_t: f64) -> KernelSpec {
    k(Family::MaternTime, &[("c_t", c_t), ("nu", 0.5)])
}

fn exp_circle(c_p: f64) -> KernelSpec {
    k(Family::MaternCircle, &[("c_p", c_p), ("nu", 0.5)])
}

fn exp_space(c_s: f64) -> KernelSpec {
    k(Family::MaternSpace, &[("c_s", c_s), ("nu", 0.5)])
}

fn gneiting_space_time() -> KernelSpec {
    k(
        Family::GneitingSpaceTimeCauchy,
        &[("c_s", 20.0), ("c_t", 50.0), ("alpha", 1.0), ("beta", 0.5), ("gamma", 0.5), ("delta", 1.0), ("lambda", 1.0)],
    )
}

fn shirota() -> KernelSpec {
    k(
        Family::ShirotaSpaceCircle,
        &[("c_s", 20.0), ("c_t", 1.0), ("alpha", 1.0), ("beta", 0.5), ("gamma", 0.5), ("delta", 1.0), ("lambda", 1.0)],
    )
}

fn white_cauchy() -> KernelSpec {
    k(
        Family::WhiteCauchy,
        &[("c_s", 1.0), ("c_t", 50.0), ("alpha", 1.0), ("beta", 0.5), ("gamma", 0.5), ("delta", 1.0), ("lambda", 1.0)],
    )
}

/// Comparison model `n` (1 through 7) with unit variance and generic starting parameters.
pub fn table_model(n: u8) -> Option<KernelSpec> {
    let spec = match n {
        1 => k(Family::Model1Separable, &[("c_s", 20.0), ("c_p", 1.0), ("c_t", 50.0)]),
        2 => gneiting_space_time(),
        3 => KernelSpec::product(vec![exp_circle(1.0), gneiting_space_time()], 1.0).ok()?,
        4 => shirota(),
        5 => KernelSpec::product(vec![exp_time(50.0), shirota()], 1.0).ok()?,
        6 => KernelSpec::product(vec![white_cauchy(), exp_space(20.0)], 1.0).ok()?,
        7 => k(Family::Model7Final, &[("c_s", 20.0), ("c_t", 50.0), ("alpha", 1.0)]),
        _ => return None,
    };
    Some(spec)
}

/// The final model at the reported posterior means.
pub fn table2_model7() -> KernelSpec {
    KernelSpec::new(
        Family::Model7Final,
        &[("c_s", TABLE2_C_S), ("c_t", TABLE2_C_T), ("alpha", TABLE2_ALPHA)],
        TABLE2_SIGMA2,
    )
    .expect("reported values are in range")
}

/// One representative kernel per family; the product entry is comparison model 3.
pub fn defaults() -> Vec<KernelSpec> {
    Family::ALL.iter().map(|&f| default_for(f)).collect()
}

pub fn default_for(family: Family) -> KernelSpec {
    match family {
        Family::MaternTime => exp_time(50.0),
        Family::MaternCircle => exp_circle(1.0),
        Family::MaternSpace => exp_space(20.0),
        Family::Product => table_model(3).expect("model 3 exists"),
        f => {
            let params: Vec<(&str, f64)> = f.params().iter().map(|d| (d.name, d.default)).collect();
            k(f, &params)
        }
    }
}
