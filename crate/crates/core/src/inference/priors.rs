use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Bound, KernelSpec};
use crate::stats::{gamma_log_pdf, inv_gamma_log_pdf, normal_log_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

/// Prior distributions for every model parameter.
///
/// Bounded kernel parameters get a uniform prior over their support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    pub tau2: InvGammaPrior,
    pub sigma2: InvGammaPrior,
    pub positive_params: GammaPrior,
    /// Variance of the independent normal prior on each regression coefficient.
    pub beta_variance: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            tau2: InvGammaPrior { shape: 2.1, rate: 10.0 },
            sigma2: InvGammaPrior { shape: 2.1, rate: 10.0 },
            positive_params: GammaPrior { shape: 0.01, rate: 0.01 },
            beta_variance: 1e3,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("tau2.shape", self.tau2.shape),
            ("tau2.rate", self.tau2.rate),
            ("sigma2.shape", self.sigma2.shape),
            ("sigma2.rate", self.sigma2.rate),
            ("positive_params.shape", self.positive_params.shape),
            ("positive_params.rate", self.positive_params.rate),
            ("beta_variance", self.beta_variance),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid_param(name, v, "prior hyperparameters must be positive"));
            }
        }
        Ok(())
    }

    pub fn log_tau2(&self, tau2: f64) -> f64 {
        inv_gamma_log_pdf(tau2, self.tau2.shape, self.tau2.rate)
    }

    pub fn log_sigma2(&self, sigma2: f64) -> f64 {
        inv_gamma_log_pdf(sigma2, self.sigma2.shape, self.sigma2.rate)
    }

    pub fn log_beta(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .map(|b| normal_log_pdf(*b, 0.0, self.beta_variance))
            .sum()
    }

    /// Prior over the free kernel parameters (σ² excluded).
    pub fn log_kernel(&self, kernel: &KernelSpec) -> f64 {
        kernel
            .free_params()
            .iter()
            .map(|p| match p.bound {
                Bound::Positive => {
                    gamma_log_pdf(p.value, self.positive_params.shape, self.positive_params.rate)
                }
                Bound::UpTo(hi) => {
                    if p.value > 0.0 && p.value <= hi {
                        -hi.ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                }
            })
            .sum()
    }
}
