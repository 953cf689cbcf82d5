//! Proper scoring rules and point-prediction criteria for held-out data.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// Empirical CRPS, `(1/M) Σ|Y_j - y| - (1/2M²) Σ_j Σ_k |Y_j - Y_k|`.
pub fn crps_mc(samples: &[f64], y: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "CRPS needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(crps_sorted(&sorted, y))
}

fn crps_sorted(sorted: &[f64], y: f64) -> f64 {
    let m = sorted.len() as f64;
    let abs_dev: f64 = sorted.iter().map(|v| (v - y).abs()).sum::<f64>() / m;
    // Σ_j Σ_k |x_j - x_k| = 2 Σ_i (2i - M + 1) x_(i)
    let pair: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * i as f64 - m + 1.0) * v)
        .sum::<f64>()
        * 2.0;
    (abs_dev - pair / (2.0 * m * m)).max(0.0)
}

/// Empirical energy score with η = 1; `samples[j]` is the j-th vector draw.
pub fn energy_score_mc(samples: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "energy score needs at least 2 samples, got {m}"
        )));
    }
    let d = y.len();
    if let Some(s) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: s.len(),
        });
    }
    if d == 1 {
        let column: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        return crps_mc(&column, y[0]);
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, z)| (x - z).powi(2)).sum::<f64>().sqrt()
    };
    let mf = m as f64;
    let term1: f64 = samples.iter().map(|s| dist(s, y)).sum::<f64>() / mf;
    let mut pair = 0.0;
    for j in 0..m {
        for k in (j + 1)..m {
            pair += dist(&samples[j], &samples[k]);
        }
    }
    Ok((term1 - 2.0 * pair / (2.0 * mf * mf)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointScores {
    pub rmspe: f64,
    pub mape: f64,
    pub coverage: f64,
}

/// RMSPE and MAPE of predictive means, and coverage of the central
/// `1 - alpha` empirical interval.
pub fn point_scores(predictive: &[Vec<f64>], y: &[f64], alpha: f64) -> Result<PointScores> {
    if predictive.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: predictive.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("no held-out observations".into()));
    }
    let n = y.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut covered = 0usize;
    for (draws, obs) in predictive.iter().zip(y) {
        if draws.is_empty() {
            return Err(Error::InvalidInput("empty predictive sample".into()));
        }
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        sq += (mean - obs).powi(2);
        abs += (mean - obs).abs();
        let mut s = draws.clone();
        s.sort_by(f64::total_cmp);
        let lo = quantile_sorted(&s, alpha / 2.0);
        let hi = quantile_sorted(&s, 1.0 - alpha / 2.0);
        if (lo..=hi).contains(obs) {
            covered += 1;
        }
    }
    Ok(PointScores {
        rmspe: (sq / n).sqrt(),
        mape: abs / n,
        coverage: covered as f64 / n,
    })
}

/// One row of a model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub model: String,
    pub es: f64,
    pub crps: f64,
    pub mape: f64,
    pub rmspe: f64,
    pub coverage: f64,
}

impl ScoreReport {
    /// Scores a set of held-out observations. `groups[i]` is the hour of
    /// observation `i`; the energy score is averaged over hours, treating the
    /// stations observed at an hour as one vector.
    pub fn compute(
        model: &str,
        predictive: &[Vec<f64>],
        y: &[f64],
        groups: &[i64],
        alpha: f64,
    ) -> Result<Self> {
        if groups.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                found: groups.len(),
            });
        }
        let point = point_scores(predictive, y, alpha)?;
        let crps = predictive
            .iter()
            .zip(y)
            .map(|(s, obs)| crps_mc(s, *obs))
            .collect::<Result<Vec<_>>>()?;
        let mut by_group: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            by_group.entry(*g).or_default().push(i);
        }
        let m = predictive[0].len();
        let es = by_group
            .values()
            .map(|idx| {
                let samples: Vec<Vec<f64>> = (0..m)
                    .map(|j| idx.iter().map(|&i| predictive[i][j]).collect())
                    .collect();
                let obs: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                energy_score_mc(&samples, &obs)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model: model.to_string(),
            es: es.iter().sum::<f64>() / es.len() as f64,
            crps: crps.iter().sum::<f64>() / crps.len() as f64,
            mape: point.mape,
            rmspe: point.rmspe,
            coverage: point.coverage,
        })
    }
}

pub fn write_reports_csv<W: Write>(reports: &[ScoreReport], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in reports {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn format_table(reports: &[ScoreReport], alpha: f64) -> String {
    let cvg = format!("{:.0}% CVG", 100.0 * (1.0 - alpha));
    let mut s = format!(
        "{:<24} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "model", "ES", "CRPS", "MAPE", "RMSPE", cvg
    );
    for r in reports {
        s.push_str(&format!(
            "{:<24} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}\n",
            r.model, r.es, r.crps, r.mape, r.rmspe, r.coverage
        ));
    }
    s
}

/// Held-out hours and the matching observation mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldoutSet {
    pub fraction: f64,
    pub seed: u64,
    pub hours: Vec<f64>,
    /// `held_out[i]` is true when observation `i` falls in a held-out hour.
    pub held_out: Vec<bool>,
}

impl HoldoutSet {
    pub fn training(&self) -> Vec<usize> {
        (0..self.held_out.len()).filter(|&i| !self.held_out[i]).collect()
    }

    pub fn testing(&self) -> Vec<usize> {
        (0..self.held_out.len()).filter(|&i| self.held_out[i]).collect()
    }
}

/// Holds out every observation at a random `fraction` of the distinct times.
pub fn holdout_hours(times: &[f64], fraction: f64, seed: u64) -> Result<HoldoutSet> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid_param("fraction", fraction, "must lie in [0, 1)"));
    }
    let mut distinct = times.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = (fraction * distinct.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hours: Vec<f64> = sample(&mut rng, distinct.len(), k)
        .into_iter()
        .map(|i| distinct[i])
        .collect();
    hours.sort_by(f64::total_cmp);
    let held_out = times
        .iter()
        .map(|t| hours.binary_search_by(|h| h.total_cmp(t)).is_ok())
        .collect();
    Ok(HoldoutSet {
        fraction,
        seed,
        hours,
        held_out,
    })
}
