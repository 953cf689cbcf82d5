use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{ChainState, ModelData, Priors};
use crate::nngp::SparseFactors;

/// Normal full conditional of β: `precision = XᵀX/τ² + I/v`, `mean = precision⁻¹ Xᵀ(y - w)/τ²`.
#[derive(Debug, Clone)]
pub struct BetaConditional {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

pub fn beta_conditional(state: &ChainState, data: &ModelData, priors: &Priors) -> BetaConditional {
    let p = data.p();
    let x = &data.x;
    let mut precision = x.tr_mul(x) / state.tau2;
    for k in 0..p {
        precision[(k, k)] += 1.0 / priors.beta_variance;
    }
    let r = DVector::from_iterator(data.n(), data.y.iter().zip(&state.w).map(|(y, w)| y - w));
    let rhs = x.tr_mul(&r) / state.tau2;
    let chol = precision.clone().cholesky().expect("beta precision is positive definite");
    BetaConditional {
        mean: chol.solve(&rhs),
        precision,
    }
}

pub fn gibbs_beta<R: Rng + ?Sized>(
    state: &ChainState,
    data: &ModelData,
    priors: &Priors,
    rng: &mut R,
) -> Vec<f64> {
    let cond = beta_conditional(state, data, priors);
    let l = cond
        .precision
        .clone()
        .cholesky()
        .expect("beta precision is positive definite")
        .l();
    let z = DVector::from_iterator(data.p(), (0..data.p()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    // L Lᵀ = P, so L⁻ᵀ z has covariance P⁻¹
    let dev = l.transpose().solve_upper_triangular(&z).expect("nonsingular factor");
    (cond.mean + dev).as_slice().to_vec()
}

/// Shape and rate of the inverse gamma full conditional of τ².
pub fn tau2_conditional(state: &ChainState, data: &ModelData, priors: &Priors) -> (f64, f64) {
    let ssr: f64 = (0..data.n())
        .map(|i| (data.y[i] - data.mean_at(i, &state.beta) - state.w[i]).powi(2))
        .sum();
    (
        priors.tau2.shape + data.n() as f64 / 2.0,
        priors.tau2.rate + ssr / 2.0,
    )
}

pub fn gibbs_tau2<R: Rng + ?Sized>(
    state: &ChainState,
    data: &ModelData,
    priors: &Priors,
    rng: &mut R,
) -> f64 {
    let (shape, rate) = tau2_conditional(state, data, priors);
    sample_inv_gamma(shape, rate, rng)
}

pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive shape and rate");
    1.0 / g.sample(rng)
}

/// One sequential sweep over the latent field in reference order.
///
/// `children[i]` lists `(j, k)` with `N(j)[k] = i`.
pub fn update_w<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &ModelData,
    factors: &SparseFactors,
    children: &[Vec<(usize, usize)>],
    rng: &mut R,
) {
    let inv_tau2 = 1.0 / state.tau2;
    for i in 0..data.n() {
        let (mean, precision) = w_conditional(i, state, data, factors, children, inv_tau2);
        let z: f64 = rng.sample(StandardNormal);
        state.w[i] = mean + z / precision.sqrt();
    }
}

fn w_conditional(
    i: usize,
    state: &ChainState,
    data: &ModelData,
    factors: &SparseFactors,
    children: &[Vec<(usize, usize)>],
    inv_tau2: f64,
) -> (f64, f64) {
    let w = &state.w;
    let row = &factors.rows[i];
    let mut precision = inv_tau2 + 1.0 / row.f;
    let mut num = (data.y[i] - data.mean_at(i, &state.beta)) * inv_tau2
        + factors.conditional_mean(i, w) / row.f;
    for &(j, k) in &children[i] {
        let cj = &factors.rows[j];
        let bji = cj.b[k];
        let rest = factors.conditional_mean(j, w) - bji * w[i];
        precision += bji * bji / cj.f;
        num += bji * (w[j] - rest) / cj.f;
    }
    (num / precision, precision)
}
