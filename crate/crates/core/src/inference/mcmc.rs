use std::io::{Read, Write};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    gibbs_beta, gibbs_tau2, update_w, ChainState, CovParamSampler, CovState, MhTuning, ModelData,
    Priors,
};
use crate::error::{Error, Result};
use crate::kernels::{Bound, KernelSpec};
use crate::nngp::{NeighborGraph, ReferenceSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub priors: Priors,
    pub tuning: MhTuning,
    /// Retain the latent field for every kept draw.
    pub keep_w: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 1000,
            thin: 1,
            seed: 1,
            priors: Priors::default(),
            tuning: MhTuning::default(),
            keep_w: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be >= 1".into()));
        }
        if self.burn_in > self.iterations {
            return Err(Error::InvalidInput(format!(
                "burn_in ({}) exceeds iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.tuning.initial_scale > 0.0 && self.tuning.initial_scale.is_finite()) {
            return Err(Error::invalid_param(
                "tuning.initial_scale",
                self.tuning.initial_scale,
                "must be positive",
            ));
        }
        self.priors.validate()
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawMeta {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub acceptance_burn_in: f64,
    pub acceptance_sampling: f64,
}

/// Retained states, one row per draw in column order `beta_*, tau2, sigma2, <kernel params>`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Latent fields in reference order, aligned with `rows`; empty when not kept.
    pub w: Vec<Vec<f64>>,
    pub kernel: KernelSpec,
    pub n_beta: usize,
    pub meta: DrawMeta,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn beta(&self, m: usize) -> &[f64] {
        &self.rows[m][..self.n_beta]
    }

    pub fn tau2(&self, m: usize) -> f64 {
        self.rows[m][self.n_beta]
    }

    /// Kernel (with σ²) of draw `m`.
    pub fn kernel_at(&self, m: usize) -> Result<KernelSpec> {
        let row = &self.rows[m];
        self.kernel
            .with_free_params(&row[self.n_beta + 2..])?
            .with_sigma2(row[self.n_beta + 1])
    }

    pub fn state(&self, m: usize) -> Result<ChainState> {
        Ok(ChainState {
            beta: self.beta(m).to_vec(),
            w: self.w.get(m).cloned().unwrap_or_default(),
            tau2: self.tau2(m),
            kernel: self.kernel_at(m)?,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(&self.names)?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Latent draws with one column per observation in input order.
    pub fn write_w_csv<W: Write>(&self, out: W, reference: &ReferenceSet) -> Result<()> {
        let n = reference.len();
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record((0..n).map(|i| format!("w_{i}")))?;
        let mut buf = vec![0.0; n];
        for w in &self.w {
            for (k, v) in w.iter().enumerate() {
                buf[reference.original_index(k)] = *v;
            }
            wtr.write_record(buf.iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Inverse of [`Self::write_csv`] and [`Self::write_w_csv`].
    pub fn read_csv<R: Read, S: Read>(
        params: R,
        latent: Option<S>,
        kernel: KernelSpec,
        n_beta: usize,
        meta: DrawMeta,
        reference: &ReferenceSet,
    ) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(params);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let expected = n_beta + 2 + kernel.free_params().len();
        if names.len() != expected {
            return Err(Error::Schema(format!(
                "draws file has {} columns, model needs {expected}",
                names.len()
            )));
        }
        let rows = rdr
            .records()
            .map(|r| parse_row(&r?))
            .collect::<Result<Vec<_>>>()?;
        let mut w = Vec::new();
        if let Some(lat) = latent {
            let mut rdr = csv::Reader::from_reader(lat);
            for rec in rdr.records() {
                let vals = parse_row(&rec?)?;
                if vals.len() != reference.len() {
                    return Err(Error::DimensionMismatch {
                        expected: reference.len(),
                        found: vals.len(),
                    });
                }
                w.push(reference.permutation().iter().map(|&i| vals[i]).collect());
            }
            if w.len() != rows.len() {
                return Err(Error::DimensionMismatch {
                    expected: rows.len(),
                    found: w.len(),
                });
            }
        }
        Ok(Self {
            names,
            rows,
            w,
            kernel,
            n_beta,
            meta,
        })
    }
}

fn parse_row(rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Schema(format!("not a number: `{s}`")))
        })
        .collect()
}

/// Least-squares β, residuals as w, variances split 90/10 from the residual
/// variance, bounded kernel parameters at their midpoints.
pub fn initial_state(data: &ModelData, kernel: &KernelSpec) -> Result<ChainState> {
    let p = data.p();
    let n = data.n();
    let beta = if p == 0 || n == 0 {
        vec![0.0; p]
    } else {
        let mut xtx = data.x.tr_mul(&data.x);
        for k in 0..p {
            xtx[(k, k)] += 1e-8 * (1.0 + xtx[(k, k)]);
        }
        let xty = data.x.tr_mul(&DVector::from_column_slice(&data.y));
        let chol = xtx.cholesky().ok_or_else(|| {
            Error::InvalidInput("design matrix is rank deficient".into())
        })?;
        chol.solve(&xty).as_slice().to_vec()
    };
    let w: Vec<f64> = (0..n).map(|i| data.y[i] - data.mean_at(i, &beta)).collect();
    let var = if n > 1 {
        let m = w.iter().sum::<f64>() / n as f64;
        w.iter().map(|r| (r - m).powi(2)).sum::<f64>() / n as f64
    } else {
        0.0
    };
    let var = if var > 0.0 && var.is_finite() { var } else { 1.0 };
    let free: Vec<f64> = kernel
        .free_params()
        .iter()
        .map(|p| match p.bound {
            Bound::UpTo(hi) => hi / 2.0,
            Bound::Positive => p.value,
        })
        .collect();
    Ok(ChainState {
        beta,
        w,
        tau2: 0.1 * var,
        kernel: kernel.with_free_params(&free)?.with_sigma2(0.9 * var)?,
    })
}

pub fn run_mcmc(
    data: &ModelData,
    graph: &NeighborGraph,
    kernel: &KernelSpec,
    config: &McmcConfig,
) -> Result<PosteriorDraws> {
    let init = initial_state(data, kernel)?;
    run_mcmc_from(data, graph, init, config)
}

/// Runs the chain from a given state: β, then w, then τ², then the joint
/// σ²/kernel block.
pub fn run_mcmc_from(
    data: &ModelData,
    graph: &NeighborGraph,
    init: ChainState,
    config: &McmcConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    if graph.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: graph.len(),
        });
    }
    let priors = &config.priors;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = init;
    let mut cov = CovState::new(&state, data, graph).map_err(|e| match e {
        Error::Numerical { node, reason } => Error::Numerical {
            node,
            reason: format!(
                "{reason}; state: beta={:?} tau2={} kernel={}",
                state.beta,
                state.tau2,
                serde_json::to_string(&state.kernel).unwrap_or_default()
            ),
        },
        other => other,
    })?;
    let children = graph.children();
    let mut mh = CovParamSampler::new(&state.kernel, config.tuning.clone());

    let mut names: Vec<String> = data
        .covariate_names
        .iter()
        .map(|n| format!("beta_{n}"))
        .collect();
    names.push("tau2".into());
    names.push("sigma2".into());
    names.extend(state.kernel.free_params().into_iter().map(|p| p.name));

    let mut rows = Vec::with_capacity(config.retained());
    let mut ws = Vec::new();
    let mut acceptance_burn_in = 0.0;
    for it in 1..=config.iterations {
        state.beta = gibbs_beta(&state, data, priors, &mut rng);
        update_w(&mut state, data, &cov.factors, &children, &mut rng);
        state.tau2 = gibbs_tau2(&state, data, priors, &mut rng);
        // the cached density refers to the previous w
        cov.log_density = crate::nngp::log_density(&state.w, &cov.factors)?;
        let in_burn = it <= config.burn_in;
        mh.step(&mut state, &mut cov, priors, in_burn, &mut rng);

        if it == config.burn_in {
            acceptance_burn_in = mh.acceptance_rate();
            mh.reset_counts();
        }
        if !in_burn && (it - config.burn_in).is_multiple_of(config.thin) {
            let mut row = state.beta.clone();
            row.push(state.tau2);
            row.push(state.sigma2());
            row.extend(state.kernel.free_values());
            rows.push(row);
            if config.keep_w {
                ws.push(state.w.clone());
            }
        }
    }
    let acceptance_sampling = if config.iterations > config.burn_in {
        mh.acceptance_rate()
    } else {
        0.0
    };
    Ok(PosteriorDraws {
        names,
        rows,
        w: ws,
        kernel: state.kernel.clone(),
        n_beta: data.p(),
        meta: DrawMeta {
            iterations: config.iterations,
            burn_in: config.burn_in,
            thin: config.thin,
            seed: config.seed,
            acceptance_burn_in,
            acceptance_sampling,
        },
    })
}
