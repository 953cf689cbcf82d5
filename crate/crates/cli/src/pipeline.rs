//! Steps shared by several commands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use qpgp_core::data::{self, Dataset};
use qpgp_core::geometry::{project, unproject, PlanarCoord, SpaceTimePoint, StationLocation};
use qpgp_core::hull::ConvexHull;
use qpgp_core::inference::{run_mcmc, McmcConfig, ModelData, PosteriorDraws};
use qpgp_core::kernels::KernelSpec;
use qpgp_core::nngp::{build_neighbors, NeighborSpec, ReferenceSet};
use qpgp_core::predict::{interpolate_covariates, posterior_predictive, PredictionTask, PredictiveDraws};
use qpgp_core::scoring::{holdout_hours, HoldoutSet};

use crate::config::{GridConfig, RunConfig};

/// Offset separating the prediction RNG from the sampler's.
const PREDICT_STREAM: u64 = 0x005E_ED0F_9E37;

pub fn predict_seed(seed: u64) -> u64 {
    seed ^ PREDICT_STREAM
}

/// Dataset named in the config, or the output of an earlier `simulate`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let (stations, records) = match &cfg.data {
        Some(d) => (d.stations.clone(), d.records.clone()),
        None => {
            let dir = cfg.out.join("simulate");
            let pair = (dir.join("stations.csv"), dir.join("records.csv"));
            if !pair.0.exists() || !pair.1.exists() {
                bail!(
                    "no `data` block in the config and no simulated data in {}; add `data` or run `qpgp simulate` first",
                    dir.display()
                );
            }
            pair
        }
    };
    data::ingest(&stations, &records)
        .with_context(|| format!("ingesting {} and {}", stations.display(), records.display()))
}

pub fn holdout(dataset: &Dataset, fraction: f64, seed: u64) -> Result<HoldoutSet> {
    Ok(holdout_hours(&dataset.hours(), fraction, seed)?)
}

/// Indices of records whose hour is not withheld.
pub fn training_indices(dataset: &Dataset, withheld: &[i64]) -> Vec<usize> {
    (0..dataset.len())
        .filter(|&i| withheld.binary_search(&dataset.records[i].hour).is_err())
        .collect()
}

pub fn model_data(dataset: &Dataset, indices: &[usize]) -> Result<ModelData> {
    if indices.is_empty() {
        bail!("no training records");
    }
    let sub = dataset.subset(indices);
    Ok(ModelData::new(&sub.points(), &sub.response(), &sub.design())?
        .with_covariate_names(sub.covariate_names())?)
}

pub fn fit(
    data: &ModelData,
    kernel: &KernelSpec,
    neighbors: &NeighborSpec,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    let graph = build_neighbors(&data.reference, neighbors)?;
    Ok(run_mcmc(data, &graph, kernel, mcmc)?)
}

/// Keeps at most `max` evenly spaced draws.
pub fn thin_draws(draws: &PosteriorDraws, max: Option<usize>) -> PosteriorDraws {
    let n = draws.len();
    let Some(max) = max.filter(|&m| m < n) else {
        return draws.clone();
    };
    let idx: Vec<usize> = (0..max).map(|k| k * n / max).collect();
    PosteriorDraws {
        rows: idx.iter().map(|&i| draws.rows[i].clone()).collect(),
        w: if draws.w.is_empty() {
            Vec::new()
        } else {
            idx.iter().map(|&i| draws.w[i].clone()).collect()
        },
        ..draws.clone()
    }
}

/// Design rows at the targets, with RH and TMP interpolated from the
/// stations reporting at the target's hour.
pub fn target_design(dataset: &Dataset, targets: &[SpaceTimePoint]) -> Result<DMatrix<f64>> {
    let by_hour = dataset.covariates_by_hour();
    let mut x = DMatrix::zeros(targets.len(), 3);
    for (j, t) in targets.iter().enumerate() {
        let hour = t.t.round() as i64;
        let stations = by_hour.get(&hour).with_context(|| {
            format!(
                "no station covariates at {} for target {j}",
                data::format_timestamp(&dataset.timestamp(hour))
            )
        })?;
        let v = interpolate_covariates(&t.coord, stations)?;
        x[(j, 0)] = 1.0;
        x[(j, 1)] = v[0];
        x[(j, 2)] = v[1];
    }
    Ok(x)
}

pub fn station_hull(dataset: &Dataset) -> ConvexHull {
    ConvexHull::new(&dataset.coords)
}

pub fn predict_at(
    dataset: &Dataset,
    reference: &ReferenceSet,
    draws: &PosteriorDraws,
    targets: Vec<SpaceTimePoint>,
    spec: &NeighborSpec,
    hull_check: bool,
    seed: u64,
) -> Result<PredictiveDraws> {
    let covariates = target_design(dataset, &targets)?;
    let task = PredictionTask {
        targets,
        covariates,
        neighbor_spec: spec.clone(),
        hull: hull_check.then(|| station_hull(dataset)),
    };
    Ok(posterior_predictive(&task, draws, reference, seed)?)
}

/// Grid cell centers inside the station hull and, when given, the polygon's hull.
pub fn grid_cells(dataset: &Dataset, grid: &GridConfig) -> Result<Vec<PlanarCoord>> {
    let hull = station_hull(dataset);
    let poly = match &grid.polygon {
        Some(v) => {
            let (lat0, lon0) = dataset.center();
            let locs: Vec<StationLocation> = v
                .iter()
                .enumerate()
                .map(|(k, p)| StationLocation::new(format!("v{k}"), p[1], p[0]))
                .collect();
            let center = StationLocation::new("center", lat0, lon0);
            Some(ConvexHull::new(&project(&locs, Some(&center))?))
        }
        None => None,
    };
    let xs = dataset.coords.iter().map(|c| c.x);
    let ys = dataset.coords.iter().map(|c| c.y);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let r = grid.resolution_km;
    let nx = ((x1 - x0) / r).floor() as usize + 1;
    let ny = ((y1 - y0) / r).floor() as usize + 1;
    // center the lattice on the bounding box
    let ox = x0 + ((x1 - x0) - (nx - 1) as f64 * r) / 2.0;
    let oy = y0 + ((y1 - y0) - (ny - 1) as f64 * r) / 2.0;
    let mut cells = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let c = PlanarCoord::new(ox + ix as f64 * r, oy + iy as f64 * r);
            if hull.contains(&c, 1e-9) && poly.as_ref().is_none_or(|p| p.contains(&c, 1e-9)) {
                cells.push(c);
            }
        }
    }
    if cells.is_empty() {
        bail!(
            "no grid cells at {} km resolution fall inside the station hull; use a finer grid.resolution_km",
            r
        );
    }
    Ok(cells)
}

/// Hour range of the grid in epoch hours, inclusive.
pub fn grid_hours(dataset: &Dataset, grid: &GridConfig) -> Result<(i64, i64)> {
    let first = dataset.records.iter().map(|r| r.hour).min().unwrap_or(0);
    let last = dataset.records.iter().map(|r| r.hour).max().unwrap_or(0);
    let to_hour = |s: &str| -> Result<i64> {
        let t = data::parse_timestamp(s)?;
        let minutes = (t - dataset.epoch).num_minutes();
        if minutes % 60 != 0 {
            bail!("grid time {s} is not on the hour");
        }
        Ok(minutes / 60)
    };
    let start = grid.start.as_deref().map(to_hour).transpose()?.unwrap_or(first);
    let end = grid.end.as_deref().map(to_hour).transpose()?.unwrap_or(last);
    if end < start {
        bail!("grid end precedes grid start");
    }
    Ok((start, end))
}

/// `lon,lat,timestamp` targets projected with the dataset's center.
pub fn read_targets(path: &Path, dataset: &Dataset) -> Result<Vec<SpaceTimePoint>> {
    #[derive(serde::Deserialize)]
    struct Row {
        lon: f64,
        lat: f64,
        timestamp: String,
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let (lat0, lon0) = dataset.center();
    let center = StationLocation::new("center", lat0, lon0);
    let mut out = Vec::new();
    for (k, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", path.display(), k + 1))?;
        let c = project(&[StationLocation::new("t", row.lat, row.lon)], Some(&center))?[0];
        let t = data::parse_timestamp(&row.timestamp)?;
        let minutes = (t - dataset.epoch).num_minutes();
        if minutes % 60 != 0 {
            bail!("{} row {}: timestamp is not on the hour", path.display(), k + 1);
        }
        out.push(SpaceTimePoint::new(c.x, c.y, (minutes / 60) as f64));
    }
    if out.is_empty() {
        bail!("{} lists no targets", path.display());
    }
    Ok(out)
}

pub fn lon_lat(dataset: &Dataset, c: &PlanarCoord) -> (f64, f64) {
    let (lat0, lon0) = dataset.center();
    let (lat, lon) = unproject(c, lat0, lon0);
    (lon, lat)
}

/// Per-parameter posterior summaries.
pub fn summarize(draws: &PosteriorDraws) -> Vec<(String, [f64; 5])> {
    draws
        .names
        .iter()
        .map(|name| {
            let mut v = draws.column(name).expect("name from the same draws");
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            v.sort_by(f64::total_cmp);
            let q = |p| qpgp_core::stats::quantile_sorted(&v, p);
            (name.clone(), [mean, sd, q(0.025), q(0.5), q(0.975)])
        })
        .collect()
}

pub fn write_summary(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["param", "mean", "sd", "q025", "q50", "q975"])?;
    for (name, s) in summarize(draws) {
        let mut rec = vec![name];
        rec.extend(s.iter().map(|v| v.to_string()));
        wtr.write_record(rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

/// Targets grouped by hour, as used for energy scores.
pub fn hours_of(targets: &[SpaceTimePoint]) -> Vec<i64> {
    targets.iter().map(|t| t.t.round() as i64).collect()
}
