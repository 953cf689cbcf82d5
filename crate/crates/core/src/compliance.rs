//! Regulatory exceedance and daily respiratory relative risk from predictive draws.
//!
//! Series are hourly on the ppb scale and start at local midnight.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegulatoryLimits {
    pub hourly_ppb: f64,
    pub eight_hour_ppb: f64,
}

impl Default for RegulatoryLimits {
    fn default() -> Self {
        Self {
            hourly_ppb: 95.0,
            eight_hour_ppb: 70.0,
        }
    }
}

impl RegulatoryLimits {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("hourly_ppb", self.hourly_ppb), ("eight_hour_ppb", self.eight_hour_ppb)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid_param(name, v, "limits must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskParams {
    /// Threshold `T` in ppb.
    pub threshold: f64,
    pub coef_hd: f64,
    pub coef_on: f64,
    pub scale: f64,
    /// First clock hour of the night window.
    pub night_start: u32,
    /// Clock hour at which the night window closes (exclusive).
    pub night_end: u32,
    /// Number of nights averaged into `O_n`.
    pub lag_days: usize,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            threshold: 60.0,
            coef_hd: 5.020e-4,
            coef_on: 5.714e-3,
            scale: 0.864,
            night_start: 21,
            night_end: 8,
            lag_days: 3,
        }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("threshold", self.threshold),
            ("coef_hd", self.coef_hd),
            ("coef_on", self.coef_on),
            ("scale", self.scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid_param(name, v, "must be positive"));
            }
        }
        if self.lag_days < 1 {
            return Err(Error::InvalidInput("lag_days must be >= 1".into()));
        }
        if self.night_start > 23 || self.night_end > 24 || self.night_end > self.night_start {
            return Err(Error::InvalidInput(format!(
                "night window {}:00-{}:00 must start in the evening and end the next morning",
                self.night_start, self.night_end
            )));
        }
        Ok(())
    }

    /// Night preceding day `day`'s morning, as hour indices into a midnight-aligned series.
    fn night_hours(&self, day: usize) -> Option<std::ops::Range<usize>> {
        let start = (day * 24 + self.night_start as usize).checked_sub(24)?;
        Some(start..day * 24 + self.night_end as usize)
    }
}

pub fn hourly_exceed(series: &[f64], limit: f64) -> Vec<bool> {
    series.iter().map(|v| *v > limit).collect()
}

/// Trailing 8-hour means compared to `limit`; the first seven hours are never flagged.
pub fn eight_hour_exceed(series: &[f64], limit: f64) -> Vec<bool> {
    let mut out = vec![false; series.len()];
    for t in 7..series.len() {
        let mean = series[t - 7..=t].iter().sum::<f64>() / 8.0;
        out[t] = mean > limit;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DailyRisk {
    pub r: f64,
    /// Hours above the threshold.
    pub h: f64,
    /// Daily maximum minus the threshold, floored at 0.
    pub d: f64,
    pub o_n: f64,
    /// No prior night was available, so `O_n` was set to 0.
    pub no_nights: bool,
}

/// `r = scale · exp(coef_hd·H·D + coef_on·O_n)`.
pub fn risk_from_terms(h: f64, d: f64, o_n: f64, params: &RiskParams) -> f64 {
    params.scale * (params.coef_hd * h * d + params.coef_on * o_n).exp()
}

pub fn daily_risk(day: &[f64], prior_nights: &[&[f64]], params: &RiskParams) -> Result<DailyRisk> {
    if day.is_empty() {
        return Err(Error::InvalidInput("empty day series".into()));
    }
    let t = params.threshold;
    let h = day.iter().filter(|v| **v > t).count() as f64;
    let max = day.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d = (max - t).max(0.0);
    let nights: Vec<f64> = prior_nights
        .iter()
        .take(params.lag_days)
        .filter(|n| !n.is_empty())
        .map(|n| n.iter().sum::<f64>() / n.len() as f64)
        .collect();
    let no_nights = nights.is_empty();
    let o_n = if no_nights {
        0.0
    } else {
        nights.iter().sum::<f64>() / nights.len() as f64
    };
    Ok(DailyRisk {
        r: risk_from_terms(h, d, o_n, params),
        h,
        d,
        o_n,
        no_nights,
    })
}

fn check_series(len: usize) -> Result<usize> {
    if len == 0 || !len.is_multiple_of(24) {
        return Err(Error::InvalidInput(format!(
            "hourly series must cover whole days from midnight, got {len} hours"
        )));
    }
    Ok(len / 24)
}

/// Per-day exceedance flags and risks for one midnight-aligned hourly series.
pub fn daily_series(
    series: &[f64],
    limits: &RegulatoryLimits,
    params: &RiskParams,
) -> Result<Vec<(bool, DailyRisk)>> {
    let days = check_series(series.len())?;
    let hourly = hourly_exceed(series, limits.hourly_ppb);
    let eight = eight_hour_exceed(series, limits.eight_hour_ppb);
    (0..days)
        .map(|d| {
            let hours = d * 24..(d + 1) * 24;
            let exceed = hours.clone().any(|t| hourly[t] || eight[t]);
            let nights: Vec<&[f64]> = (0..params.lag_days)
                .filter_map(|k| d.checked_sub(k))
                .filter_map(|day| params.night_hours(day))
                .map(|r| &series[r])
                .collect();
            Ok((exceed, daily_risk(&series[hours], &nights, params)?))
        })
        .collect()
}

/// Scale that makes the average daily risk over a reference series equal 1.
pub fn recalibrate_scale(series: &[f64], params: &RiskParams) -> Result<f64> {
    let unit = RiskParams {
        scale: 1.0,
        ..params.clone()
    };
    let days = daily_series(series, &RegulatoryLimits::default(), &unit)?;
    let mean = days.iter().map(|(_, r)| r.r).sum::<f64>() / days.len() as f64;
    Ok(1.0 / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    fn of(values: &[f64]) -> Self {
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lo: quantile(values, 0.025),
            hi: quantile(values, 0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDay {
    pub cell: usize,
    pub day: usize,
    pub p_exceed: f64,
    pub risk: Band,
    pub no_nights: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailySummary {
    pub day: usize,
    /// Fraction of cells exceeding either limit at least once that day.
    pub proportion: Band,
    pub risk_mean: Band,
    pub risk_max: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationSummary {
    pub cell: usize,
    /// Fraction of days with an exceedance, averaged over draws.
    pub exceed_day_fraction: f64,
    pub risk_mean: Band,
    pub risk_max: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceReport {
    pub n_draws: usize,
    pub cell_days: Vec<CellDay>,
    pub daily: Vec<DailySummary>,
    pub locations: Vec<LocationSummary>,
}

/// Summaries across posterior draws. `cells[c]` is an `M × hours` matrix of
/// ppb draws for grid cell `c`; all cells share the same draws and hours.
pub fn posterior_compliance(
    cells: &[DMatrix<f64>],
    limits: &RegulatoryLimits,
    params: &RiskParams,
) -> Result<ComplianceReport> {
    limits.validate()?;
    params.validate()?;
    let Some(first) = cells.first() else {
        return Err(Error::InvalidInput("no grid cells".into()));
    };
    let (m, hours) = first.shape();
    if m == 0 {
        return Err(Error::InvalidInput("no predictive draws".into()));
    }
    let days = check_series(hours)?;
    if let Some(c) = cells.iter().find(|c| c.shape() != (m, hours)) {
        return Err(Error::DimensionMismatch {
            expected: m * hours,
            found: c.nrows() * c.ncols(),
        });
    }

    // per cell: [draw][day] -> (exceed, risk)
    let per_cell: Vec<Vec<Vec<(bool, DailyRisk)>>> = cells
        .par_iter()
        .map(|cell| {
            (0..m)
                .map(|k| {
                    let series: Vec<f64> = cell.row(k).iter().copied().collect();
                    daily_series(&series, limits, params)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut cell_days = Vec::with_capacity(cells.len() * days);
    let mut locations = Vec::with_capacity(cells.len());
    for (c, draws) in per_cell.iter().enumerate() {
        for d in 0..days {
            let risks: Vec<f64> = draws.iter().map(|s| s[d].1.r).collect();
            let p = draws.iter().filter(|s| s[d].0).count() as f64 / m as f64;
            cell_days.push(CellDay {
                cell: c,
                day: d,
                p_exceed: p,
                risk: Band::of(&risks),
                no_nights: draws[0][d].1.no_nights,
            });
        }
        let means: Vec<f64> = draws
            .iter()
            .map(|s| s.iter().map(|x| x.1.r).sum::<f64>() / days as f64)
            .collect();
        let maxes: Vec<f64> = draws
            .iter()
            .map(|s| s.iter().map(|x| x.1.r).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let exceed_days = draws
            .iter()
            .map(|s| s.iter().filter(|x| x.0).count() as f64 / days as f64)
            .sum::<f64>()
            / m as f64;
        locations.push(LocationSummary {
            cell: c,
            exceed_day_fraction: exceed_days,
            risk_mean: Band::of(&means),
            risk_max: Band::of(&maxes),
        });
    }

    let n_cells = cells.len() as f64;
    let daily = (0..days)
        .map(|d| {
            let mut prop = Vec::with_capacity(m);
            let mut mean = Vec::with_capacity(m);
            let mut max = Vec::with_capacity(m);
            for k in 0..m {
                let mut exceed = 0usize;
                let mut sum = 0.0;
                let mut hi = f64::NEG_INFINITY;
                for cell in &per_cell {
                    let (e, r) = cell[k][d];
                    exceed += usize::from(e);
                    sum += r.r;
                    hi = hi.max(r.r);
                }
                prop.push(exceed as f64 / n_cells);
                mean.push(sum / n_cells);
                max.push(hi);
            }
            DailySummary {
                day: d,
                proportion: Band::of(&prop),
                risk_mean: Band::of(&mean),
                risk_max: Band::of(&max),
            }
        })
        .collect();
    Ok(ComplianceReport {
        n_draws: m,
        cell_days,
        daily,
        locations,
    })
}
