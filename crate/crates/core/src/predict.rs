//! Composition sampling of the posterior predictive at new location-time pairs.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{LagTriple, PlanarCoord, SpaceTimePoint};
use crate::hull::ConvexHull;
use crate::inference::PosteriorDraws;
use crate::kernels::{Covariance, KernelSpec};
use crate::nngp::{select_neighbors, BlockLags, LagTable, NeighborSpec, ReferenceSet, JITTER};
use crate::stats::quantile_sorted;

/// Distance below which a target is treated as sitting on a station.
pub const EXACT_MATCH_KM: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PredictionTask {
    pub targets: Vec<SpaceTimePoint>,
    /// `|targets| × p` covariates, in the same column order as the fitted design.
    pub covariates: DMatrix<f64>,
    /// Lags are applied both backward and forward.
    pub neighbor_spec: NeighborSpec,
    pub hull: Option<ConvexHull>,
}

/// Neighbors of a target among all reference points.
///
/// Lags are used in both directions; simultaneous neighbors are the
/// `n_spatial` nearest points at the target's time, excluding a coincident one.
pub fn prediction_neighbors(
    target: &SpaceTimePoint,
    reference: &ReferenceSet,
    spec: &NeighborSpec,
) -> Result<Vec<usize>> {
    spec.validate()?;
    let offsets: Vec<f64> = spec
        .lags_back
        .iter()
        .flat_map(|l| [*l, -*l])
        .collect();
    let set = select_neighbors(
        reference,
        target,
        &offsets,
        spec.n_spatial,
        reference.len(),
        spec,
    );
    if set.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no reference points at any configured lag of target (t = {}, x = {}, y = {})",
            target.t, target.coord.x, target.coord.y
        )));
    }
    Ok(set)
}

/// Mean and variance of `w(target) | w_N`.
pub fn conditional<K: Covariance + ?Sized>(
    kernel: &K,
    target: &SpaceTimePoint,
    neighbors: &[&SpaceTimePoint],
    w_n: &[f64],
) -> Result<(f64, f64)> {
    let c0 = kernel.covariance(&LagTriple::ZERO);
    if neighbors.is_empty() {
        return Ok((0.0, c0));
    }
    let mut table = LagTable::default();
    let block = table.block(target, neighbors);
    let cov = table.evaluate(kernel);
    conditional_from(&block, &cov, c0, JITTER * kernel.variance(), w_n, 0)
}

fn conditional_from(
    block: &BlockLags,
    cov: &[f64],
    c0: f64,
    jitter: f64,
    w_n: &[f64],
    node: usize,
) -> Result<(f64, f64)> {
    if block.len() == 0 {
        return Ok((0.0, c0));
    }
    let (b, c) = block.solve(cov, jitter, node)?;
    let mean = b.iter().zip(w_n).map(|(b, w)| b * w).sum();
    let var = (c0 - b.dot(&c)).max(0.0);
    Ok((mean, var))
}

pub fn draw_w<K: Covariance + ?Sized, R: Rng + ?Sized>(
    kernel: &K,
    target: &SpaceTimePoint,
    neighbors: &[&SpaceTimePoint],
    w_n: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let (mean, var) = conditional(kernel, target, neighbors, w_n)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(mean + var.sqrt() * z)
}

/// Inverse squared distance weighting of simultaneous station covariates.
pub fn interpolate_covariates(target: &PlanarCoord, stations: &[(PlanarCoord, Vec<f64>)]) -> Result<Vec<f64>> {
    let Some((_, first)) = stations.first() else {
        return Err(Error::InvalidInput(
            "no simultaneous station records to interpolate from".into(),
        ));
    };
    let p = first.len();
    if let Some((_, v)) = stations.iter().find(|(_, v)| v.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: v.len(),
        });
    }
    if let Some((_, v)) = stations
        .iter()
        .find(|(c, _)| c.distance(target) < EXACT_MATCH_KM)
    {
        return Ok(v.clone());
    }
    let weights: Vec<f64> = stations
        .iter()
        .map(|(c, _)| 1.0 / c.distance(target).powi(2))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok((0..p)
        .map(|k| {
            stations
                .iter()
                .zip(&weights)
                .map(|((_, v), w)| w * v[k])
                .sum::<f64>()
                / total
        })
        .collect())
}

/// Predictive draws: row `m` uses posterior state `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    /// Square-root scale, `M × |targets|`.
    pub sqrt_scale: DMatrix<f64>,
    /// Observable scale (ppb), the squares of `sqrt_scale`.
    pub observable: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSummary {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
}

impl PredictiveDraws {
    pub fn n_draws(&self) -> usize {
        self.observable.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.observable.ncols()
    }

    pub fn target_draws(&self, j: usize) -> Vec<f64> {
        self.observable.column(j).iter().copied().collect()
    }

    pub fn summary(&self, j: usize) -> TargetSummary {
        let mut v = self.target_draws(j);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        v.sort_by(f64::total_cmp);
        TargetSummary {
            mean,
            sd,
            q05: quantile_sorted(&v, 0.05),
            q95: quantile_sorted(&v, 0.95),
        }
    }
}

pub fn check_hull(targets: &[SpaceTimePoint], hull: &ConvexHull) -> Result<()> {
    let outside: Vec<usize> = targets
        .iter()
        .enumerate()
        .filter(|(_, t)| !hull.contains(&t.coord, 1e-9))
        .map(|(i, _)| i)
        .collect();
    if outside.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{} target(s) outside the convex hull of the stations, first index {}",
            outside.len(),
            outside[0]
        )))
    }
}

/// `y* = x*ᵀβ + w* + ε*` per retained state, reported as `(y*)²`.
pub fn posterior_predictive(
    task: &PredictionTask,
    draws: &PosteriorDraws,
    reference: &ReferenceSet,
    seed: u64,
) -> Result<PredictiveDraws> {
    let t = task.targets.len();
    if task.covariates.nrows() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: task.covariates.nrows(),
        });
    }
    if task.covariates.ncols() != draws.n_beta {
        return Err(Error::DimensionMismatch {
            expected: draws.n_beta,
            found: task.covariates.ncols(),
        });
    }
    if draws.w.len() != draws.len() {
        return Err(Error::InvalidInput(
            "posterior draws do not include the latent field".into(),
        ));
    }
    if let Some(h) = &task.hull {
        check_hull(&task.targets, h)?;
    }
    let kernels: Vec<KernelSpec> = (0..draws.len())
        .map(|m| draws.kernel_at(m))
        .collect::<Result<_>>()?;
    let m_draws = draws.len();
    let columns: Vec<Vec<f64>> = task
        .targets
        .par_iter()
        .enumerate()
        .map(|(j, target)| {
            let nb = prediction_neighbors(target, reference, &task.neighbor_spec)?;
            let nb_points: Vec<&SpaceTimePoint> = nb.iter().map(|&k| reference.point(k)).collect();
            let mut table = LagTable::default();
            let block = table.block(target, &nb_points);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let x = task.covariates.row(j);
            (0..m_draws)
                .map(|m| {
                    let kernel = &kernels[m];
                    let w = &draws.w[m];
                    let w_n: Vec<f64> = nb.iter().map(|&k| w[k]).collect();
                    let cov = table.evaluate(kernel);
                    let c0 = kernel.covariance(&LagTriple::ZERO);
                    let (mu, var) = conditional_from(&block, &cov, c0, JITTER * kernel.variance(), &w_n, j)
                        .map_err(|e| match e {
                            Error::Numerical { reason, .. } => Error::Numerical {
                                node: j,
                                reason: format!("prediction target {j}, draw {m}: {reason}"),
                            },
                            other => other,
                        })?;
                    let w_star = mu + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    let mean: f64 = x.iter().zip(draws.beta(m)).map(|(x, b)| x * b).sum();
                    let eps: f64 = rng.sample::<f64, _>(StandardNormal) * draws.tau2(m).sqrt();
                    Ok(mean + w_star + eps)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let sqrt_scale = DMatrix::from_fn(m_draws, t, |m, j| columns[j][m]);
    let observable = sqrt_scale.map(|v| v * v);
    Ok(PredictiveDraws {
        sqrt_scale,
        observable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Family;

    #[test]
    fn covariate_examples() {
        let a = (PlanarCoord::new(0.0, 0.0), vec![10.0, 20.0]);
        let b = (PlanarCoord::new(2.0, 0.0), vec![30.0, 40.0]);
        let st = vec![a.clone(), b.clone()];
        assert_eq!(interpolate_covariates(&PlanarCoord::new(0.0, 0.0), &st).unwrap(), vec![10.0, 20.0]);
        assert_eq!(interpolate_covariates(&PlanarCoord::new(1.0, 0.0), &st).unwrap(), vec![20.0, 30.0]);
        let st = vec![
            (PlanarCoord::new(1.0, 0.0), vec![0.0]),
            (PlanarCoord::new(-2.0, 0.0), vec![30.0]),
        ];
        let v = interpolate_covariates(&PlanarCoord::new(0.0, 0.0), &st).unwrap()[0];
        assert!((v - 6.0).abs() < 1e-12);
        assert!(interpolate_covariates(&PlanarCoord::new(0.0, 0.0), &[]).is_err());
    }

    #[test]
    fn conditional_identities() {
        let k = KernelSpec::new(Family::MaternTime, &[("c_t", 2.0)], 1.0).unwrap();
        let a = SpaceTimePoint::new(0.0, 0.0, 0.0);
        let b = SpaceTimePoint::new(0.0, 0.0, 1.0);
        let r = (-0.5f64).exp();
        let (m, v) = conditional(&k, &b, &[&a], &[1.3]).unwrap();
        assert!((m - r * 1.3).abs() < 1e-9);
        assert!((v - (1.0 - r * r)).abs() < 1e-9);

        let (m, v) = conditional(&k, &a, &[&a], &[0.7]).unwrap();
        assert!((m - 0.7).abs() < 1e-8);
        assert!(v < 1e-8);

        let far = SpaceTimePoint::new(0.0, 0.0, 1e4);
        let k2 = k.with_sigma2(2.5).unwrap();
        let (m, v) = conditional(&k2, &far, &[&a], &[0.7]).unwrap();
        assert_eq!(m, 0.0);
        assert!((v - 2.5).abs() < 1e-12);
    }
}
