//! Metropolis-within-Gibbs sampling for the NNGP regression model
//! `y = Xβ + w + ε`, `w ~ NNGP(0, C)`, `ε ~ N(0, τ²)`.

mod gibbs;
mod mcmc;
mod mh;
mod priors;

use nalgebra::DMatrix;

pub use gibbs::{
    beta_conditional, gibbs_beta, gibbs_tau2, sample_inv_gamma, tau2_conditional, update_w,
    BetaConditional,
};
pub use mcmc::{initial_state, run_mcmc, run_mcmc_from, DrawMeta, McmcConfig, PosteriorDraws};
pub use mh::{metropolis_accept, CovParamSampler, CovState, MhTuning};
pub use priors::{GammaPrior, InvGammaPrior, Priors};

use crate::error::{Error, Result};
use crate::geometry::SpaceTimePoint;
use crate::kernels::KernelSpec;
use crate::nngp::{build_reference, factors, log_density, NeighborGraph, ReferenceSet};
use crate::stats::normal_log_pdf;

/// Responses and covariates stored in reference order.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub reference: ReferenceSet,
    pub y: Vec<f64>,
    /// `n × p` design matrix.
    pub x: DMatrix<f64>,
    pub covariate_names: Vec<String>,
}

impl ModelData {
    /// Reorders `y` and the rows of `x` to match the reference ordering of `points`.
    pub fn new(points: &[SpaceTimePoint], y: &[f64], x: &DMatrix<f64>) -> Result<Self> {
        if y.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: y.len(),
            });
        }
        if x.nrows() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: x.nrows(),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("response {i} is not finite")));
        }
        let reference = build_reference(points)?;
        let perm = reference.permutation();
        let y = perm.iter().map(|&i| y[i]).collect();
        let x = x.select_rows(perm);
        let covariate_names = (0..x.ncols()).map(|k| format!("x{k}")).collect();
        Ok(Self {
            reference,
            y,
            x,
            covariate_names,
        })
    }

    pub fn with_covariate_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: names.len(),
            });
        }
        self.covariate_names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `x_iᵀβ`
    pub fn mean_at(&self, i: usize, beta: &[f64]) -> f64 {
        self.x.row(i).iter().zip(beta).map(|(x, b)| x * b).sum()
    }
}

/// One state of the chain. σ² lives inside `kernel`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub beta: Vec<f64>,
    /// Latent field in reference order.
    pub w: Vec<f64>,
    pub tau2: f64,
    pub kernel: KernelSpec,
}

impl ChainState {
    pub fn sigma2(&self) -> f64 {
        self.kernel.sigma2()
    }
}

/// Unnormalized log posterior; `-∞` outside the prior support.
pub fn log_posterior(
    state: &ChainState,
    data: &ModelData,
    graph: &NeighborGraph,
    priors: &Priors,
) -> Result<f64> {
    if state.beta.len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: state.beta.len(),
        });
    }
    if state.w.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: state.w.len(),
        });
    }
    if !(state.tau2 > 0.0 && state.tau2.is_finite() && state.sigma2() > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let prior = priors.log_tau2(state.tau2)
        + priors.log_sigma2(state.sigma2())
        + priors.log_kernel(&state.kernel)
        + priors.log_beta(&state.beta);
    if !prior.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let lik: f64 = (0..data.n())
        .map(|i| normal_log_pdf(data.y[i], data.mean_at(i, &state.beta) + state.w[i], state.tau2))
        .sum();
    let f = factors(graph, &data.reference, &state.kernel)?;
    Ok(lik + log_density(&state.w, &f)? + prior)
}
