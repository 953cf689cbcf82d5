use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ChainState, ModelData, Priors};
use crate::error::Result;
use crate::kernels::{Bound, KernelSpec};
use crate::nngp::{log_density, FactorPlan, NeighborGraph, SparseFactors};

/// Proposal settings for the joint random-walk update of σ² and the kernel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhTuning {
    /// Initial proposal standard deviation on the transformed scale.
    pub initial_scale: f64,
    pub target_acceptance: f64,
    /// Burn-in iterations before the empirical covariance is used.
    pub covariance_after: usize,
}

impl Default for MhTuning {
    fn default() -> Self {
        Self {
            initial_scale: 0.05,
            target_acceptance: 0.23,
            covariance_after: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Transform {
    Log,
    ScaledLogit(f64),
}

impl Transform {
    fn forward(self, v: f64) -> f64 {
        match self {
            Transform::Log => v.ln(),
            Transform::ScaledLogit(hi) => (v / (hi - v)).ln(),
        }
    }

    fn inverse(self, z: f64) -> f64 {
        match self {
            Transform::Log => z.exp(),
            Transform::ScaledLogit(hi) => hi / (1.0 + (-z).exp()),
        }
    }

    /// `log |dv/dz|` at `v`.
    fn log_jacobian(self, v: f64) -> f64 {
        match self {
            Transform::Log => v.ln(),
            Transform::ScaledLogit(hi) => v.ln() + (hi - v).ln() - hi.ln(),
        }
    }
}

/// Metropolis acceptance of a proposal with log-ratio `log_new - log_old`.
pub fn metropolis_accept<R: Rng + ?Sized>(log_new: f64, log_old: f64, rng: &mut R) -> bool {
    if log_new.is_nan() || log_new == f64::NEG_INFINITY {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_new - log_old
}

/// Cached quantities for the current covariance parameters.
#[derive(Debug, Clone)]
pub struct CovState {
    pub plan: FactorPlan,
    pub factors: SparseFactors,
    pub log_density: f64,
}

impl CovState {
    pub fn new(state: &ChainState, data: &ModelData, graph: &NeighborGraph) -> Result<Self> {
        let plan = FactorPlan::new(graph, &data.reference)?;
        let f = plan.factors(&state.kernel)?;
        let ld = log_density(&state.w, &f)?;
        Ok(Self {
            plan,
            factors: f,
            log_density: ld,
        })
    }
}

/// Adaptive random-walk Metropolis over `(log σ², transformed kernel parameters)`.
///
/// During burn-in the proposal covariance tracks the empirical covariance of
/// the chain and a global scale is tuned toward the target acceptance rate.
#[derive(Debug, Clone)]
pub struct CovParamSampler {
    tuning: MhTuning,
    transforms: Vec<Transform>,
    chol: DMatrix<f64>,
    log_scale: f64,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    seen: usize,
    pub proposed: usize,
    pub accepted: usize,
}

impl CovParamSampler {
    pub fn new(kernel: &KernelSpec, tuning: MhTuning) -> Self {
        let mut transforms = vec![Transform::Log];
        transforms.extend(kernel.free_params().iter().map(|p| match p.bound {
            Bound::Positive => Transform::Log,
            Bound::UpTo(hi) => Transform::ScaledLogit(hi),
        }));
        let d = transforms.len();
        Self {
            chol: DMatrix::identity(d, d) * tuning.initial_scale,
            tuning,
            transforms,
            log_scale: 0.0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
            seen: 0,
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.transforms.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn reset_counts(&mut self) {
        self.proposed = 0;
        self.accepted = 0;
    }

    fn values(kernel: &KernelSpec) -> Vec<f64> {
        let mut v = vec![kernel.sigma2()];
        v.extend(kernel.free_values());
        v
    }

    fn to_z(&self, values: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            values.len(),
            self.transforms.iter().zip(values).map(|(t, v)| t.forward(*v)),
        )
    }

    /// Kernel at a transformed point, or `None` when it falls outside the support.
    fn kernel_at(&self, template: &KernelSpec, z: &DVector<f64>) -> Option<KernelSpec> {
        let v: Vec<f64> = self
            .transforms
            .iter()
            .zip(z.iter())
            .map(|(t, z)| t.inverse(*z))
            .collect();
        if !v.iter().all(|x| x.is_finite() && *x > 0.0) {
            return None;
        }
        template.with_free_params(&v[1..]).ok()?.with_sigma2(v[0]).ok()
    }

    fn log_prior_and_jacobian(&self, kernel: &KernelSpec, priors: &Priors) -> f64 {
        let values = Self::values(kernel);
        let jac: f64 = self
            .transforms
            .iter()
            .zip(&values)
            .map(|(t, v)| t.log_jacobian(*v))
            .sum();
        priors.log_sigma2(kernel.sigma2()) + priors.log_kernel(kernel) + jac
    }

    /// One joint update. Proposals whose neighbor blocks are numerically
    /// unusable are rejected.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &mut ChainState,
        cov: &mut CovState,
        priors: &Priors,
        adapt: bool,
        rng: &mut R,
    ) -> bool {
        let d = self.dim();
        let z0 = self.to_z(&Self::values(&state.kernel));
        let eps = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let z1 = &z0 + self.log_scale.exp() * (&self.chol * eps);
        self.proposed += 1;

        let old = cov.log_density + self.log_prior_and_jacobian(&state.kernel, priors);
        let mut accept_prob = 0.0;
        let mut accepted = false;
        if let Some(kernel) = self.kernel_at(&state.kernel, &z1) {
            let lp = self.log_prior_and_jacobian(&kernel, priors);
            if lp.is_finite() {
                if let Ok(f) = cov.plan.factors(&kernel) {
                    if let Ok(ld) = log_density(&state.w, &f) {
                        let new = ld + lp;
                        accept_prob = (new - old).exp().min(1.0);
                        if metropolis_accept(new, old, rng) {
                            state.kernel = kernel;
                            cov.factors = f;
                            cov.log_density = ld;
                            accepted = true;
                        }
                    }
                }
            }
        }
        if accepted {
            self.accepted += 1;
        }
        if adapt {
            let z = if accepted { z1 } else { z0 };
            self.adapt(&z, accept_prob);
        }
        accepted
    }

    fn adapt(&mut self, z: &DVector<f64>, accept_prob: f64) {
        self.seen += 1;
        let n = self.seen as f64;
        let delta = z - &self.mean;
        self.mean += &delta / n;
        let delta2 = z - &self.mean;
        self.scatter += &delta * delta2.transpose();

        let gain = (n + 10.0).powf(-0.6);
        let target = self.tuning.target_acceptance;
        self.log_scale = (self.log_scale + gain * (accept_prob - target)).clamp(-10.0, 5.0);

        let d = self.dim();
        let start = self.tuning.covariance_after.max(2 * d);
        if self.seen >= start && (self.seen - start).is_multiple_of(25) {
            let mut cov = &self.scatter / (n - 1.0) * (2.38 * 2.38 / d as f64);
            for k in 0..d {
                cov[(k, k)] += 1e-8;
            }
            if let Some(c) = cov.cholesky() {
                if self.seen == start {
                    self.log_scale = 0.0;
                }
                self.chol = c.l();
            }
        }
    }
}
