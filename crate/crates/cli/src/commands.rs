use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use qpgp_core::compliance::posterior_compliance;
use qpgp_core::data::{self, Dataset};
use qpgp_core::geometry::SpaceTimePoint;
use qpgp_core::inference::{DrawMeta, ModelData, PosteriorDraws};
use qpgp_core::kernels::{catalog, validate_psd, Family, KernelSpec};
use qpgp_core::predict::PredictiveDraws;
use qpgp_core::scoring::{format_table, write_reports_csv, ScoreReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::Recorder;
use crate::pipeline::{self, create_dir};

/// What `fit` leaves behind for `predict` and `assess`.
#[derive(Debug, Serialize, Deserialize)]
struct FitModel {
    kernel: KernelSpec,
    n_beta: usize,
    covariate_names: Vec<String>,
    meta: DrawMeta,
    fit_hash: String,
    /// Epoch hours excluded from the fit.
    withheld_hours: Vec<i64>,
    keep_w: bool,
}

struct Fitted {
    dataset: Dataset,
    data: ModelData,
    draws: PosteriorDraws,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn write_dataset(rec: &mut Recorder, dataset: &Dataset) -> Result<()> {
    let p = rec.output("stations.csv");
    dataset.write_stations(BufWriter::new(File::create(&p)?))?;
    let p = rec.output("records.csv");
    dataset.write_records(BufWriter::new(File::create(&p)?))?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let dir = create_dir(&cfg.out.join("simulate"))?;
    let mut rec = Recorder::new("simulate", &dir);
    let (dataset, truth) = data::simulate(&cfg.simulate, cfg.seed)?;
    write_dataset(&mut rec, &dataset)?;
    let p = rec.output("truth.json");
    std::fs::write(&p, serde_json::to_string_pretty(&truth)?)?;
    println!(
        "simulated {} records at {} stations into {}",
        dataset.len(),
        dataset.stations.len(),
        dir.display()
    );
    rec.finish(cfg)?;
    Ok(())
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let dataset = pipeline::load_dataset(cfg)?;
    let withheld: Vec<i64> = if cfg.holdout.apply_to_fit && cfg.holdout.fraction > 0.0 {
        let h = pipeline::holdout(&dataset, cfg.holdout.fraction, cfg.seed)?;
        h.hours.iter().map(|t| *t as i64).collect()
    } else {
        Vec::new()
    };
    let training = pipeline::training_indices(&dataset, &withheld);
    let data = pipeline::model_data(&dataset, &training)?;
    let mcmc = qpgp_core::inference::McmcConfig {
        seed: cfg.seed,
        ..cfg.mcmc.clone()
    };
    eprintln!(
        "fitting {} on {} records ({} hours withheld), {} iterations",
        cfg.kernel.family(),
        data.n(),
        withheld.len(),
        mcmc.iterations
    );
    let draws = pipeline::fit(&data, &cfg.kernel, &cfg.neighbors, &mcmc)?;

    let dir = create_dir(&cfg.out.join("fit"))?;
    let mut rec = Recorder::new("fit", &dir);
    write_dataset(&mut rec, &dataset)?;
    let p = rec.output("draws.csv");
    draws.write_csv(BufWriter::new(File::create(&p)?))?;
    if mcmc.keep_w {
        let p = rec.output("latent.csv");
        draws.write_w_csv(BufWriter::new(File::create(&p)?), &data.reference)?;
    }
    pipeline::write_summary(&rec.output("summary.csv"), &draws)?;
    let model = FitModel {
        kernel: cfg.kernel.clone(),
        n_beta: draws.n_beta,
        covariate_names: data.covariate_names.clone(),
        meta: draws.meta.clone(),
        fit_hash: cfg.fit_hash(),
        withheld_hours: withheld,
        keep_w: mcmc.keep_w,
    };
    let p = rec.output("model.json");
    std::fs::write(&p, serde_json::to_string_pretty(&model)?)?;
    let acc = draws.meta.acceptance_sampling;
    if !(0.1..=0.6).contains(&acc) {
        rec.warn(format!("covariance-parameter acceptance rate {acc:.3} after burn-in"));
    }
    println!("{}", std::fs::read_to_string(dir.join("summary.csv"))?);
    rec.finish(cfg)?;
    Ok(())
}

fn load_fit(cfg: &RunConfig, rec: &mut Recorder) -> Result<Fitted> {
    let dir = cfg.out.join("fit");
    let model_path = dir.join("model.json");
    if !model_path.exists() {
        bail!(
            "no fitted model at {}; run `qpgp fit` with this config first",
            model_path.display()
        );
    }
    let model: FitModel = serde_json::from_str(&std::fs::read_to_string(&model_path)?)
        .with_context(|| format!("parsing {}", model_path.display()))?;
    if model.fit_hash != cfg.fit_hash() {
        rec.warn(format!(
            "config differs from the one used by `fit` ({}); predictions use the stored fit",
            model_path.display()
        ));
    }
    if !model.keep_w {
        bail!("the fit did not keep latent draws (mcmc.keep_w = false); refit to predict");
    }
    let dataset = data::ingest(&dir.join("stations.csv"), &dir.join("records.csv"))?;
    let training = pipeline::training_indices(&dataset, &model.withheld_hours);
    let data = pipeline::model_data(&dataset, &training)?;
    let open = |name: &str| -> Result<File> {
        let p = dir.join(name);
        File::open(&p).with_context(|| format!("opening {}; rerun `qpgp fit`", p.display()))
    };
    let draws = PosteriorDraws::read_csv(
        open("draws.csv")?,
        Some(open("latent.csv")?),
        model.kernel,
        model.n_beta,
        model.meta,
        &data.reference,
    )?;
    Ok(Fitted { dataset, data, draws })
}

fn grid_targets(cells: &[qpgp_core::geometry::PlanarCoord], hours: (i64, i64)) -> Vec<SpaceTimePoint> {
    cells
        .iter()
        .flat_map(|c| (hours.0..=hours.1).map(move |h| SpaceTimePoint::new(c.x, c.y, h as f64)))
        .collect()
}

pub fn predict(cfg: &RunConfig) -> Result<()> {
    let dir = create_dir(&cfg.out.join("predict"))?;
    let mut rec = Recorder::new("predict", &dir);
    let fitted = load_fit(cfg, &mut rec)?;
    let ds = &fitted.dataset;
    let targets = match &cfg.grid.targets {
        Some(p) => pipeline::read_targets(p, ds)?,
        None => grid_targets(&pipeline::grid_cells(ds, &cfg.grid)?, pipeline::grid_hours(ds, &cfg.grid)?),
    };
    let draws = pipeline::thin_draws(&fitted.draws, cfg.grid.max_draws);
    eprintln!("predicting {} targets with {} draws", targets.len(), draws.len());
    let pred = pipeline::predict_at(
        ds,
        &fitted.data.reference,
        &draws,
        targets.clone(),
        &cfg.prediction_neighbors,
        cfg.grid.hull_check,
        pipeline::predict_seed(cfg.seed),
    )?;

    let mut wtr = csv_writer(&rec.output("predictions.csv"))?;
    wtr.write_record(["target", "lon", "lat", "timestamp", "mean", "sd", "q05", "q95"])?;
    for (j, t) in targets.iter().enumerate() {
        let s = pred.summary(j);
        let (lon, lat) = pipeline::lon_lat(ds, &t.coord);
        wtr.write_record([
            j.to_string(),
            lon.to_string(),
            lat.to_string(),
            data::format_timestamp(&ds.timestamp(t.t.round() as i64)),
            s.mean.to_string(),
            s.sd.to_string(),
            s.q05.to_string(),
            s.q95.to_string(),
        ])?;
    }
    wtr.flush()?;
    if cfg.grid.write_draws {
        write_draws(&rec.output("draws.csv"), &pred)?;
    }
    rec.finish(cfg)?;
    Ok(())
}

fn write_draws(path: &Path, pred: &PredictiveDraws) -> Result<()> {
    let mut wtr = csv_writer(path)?;
    wtr.write_record((0..pred.n_targets()).map(|j| format!("t_{j}")))?;
    for row in pred.observable.row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn score(cfg: &RunConfig) -> Result<()> {
    if cfg.holdout.fraction <= 0.0 {
        bail!("score needs holdout.fraction > 0");
    }
    let dataset = pipeline::load_dataset(cfg)?;
    let h = pipeline::holdout(&dataset, cfg.holdout.fraction, cfg.seed)?;
    let test = h.testing();
    let train = h.training();
    if test.is_empty() {
        bail!("holdout.fraction {} withholds no hours", cfg.holdout.fraction);
    }
    let data = pipeline::model_data(&dataset, &train)?;
    let points = dataset.points();
    let targets: Vec<SpaceTimePoint> = test.iter().map(|&i| points[i]).collect();
    let y: Vec<f64> = test.iter().map(|&i| dataset.records[i].ozone).collect();
    let groups = pipeline::hours_of(&targets);
    let mcmc = qpgp_core::inference::McmcConfig {
        seed: cfg.seed,
        keep_w: true,
        ..cfg.mcmc.clone()
    };

    let dir = create_dir(&cfg.out.join("score"))?;
    let mut rec = Recorder::new("score", &dir);
    let mut reports = Vec::new();
    for model in cfg.score_models() {
        eprintln!("scoring {} on {} held-out records", model.name, test.len());
        let draws = pipeline::fit(&data, &model.kernel, &cfg.neighbors, &mcmc)
            .with_context(|| format!("fitting model {}", model.name))?;
        let draws = pipeline::thin_draws(&draws, cfg.grid.max_draws);
        let pred = pipeline::predict_at(
            &dataset,
            &data.reference,
            &draws,
            targets.clone(),
            &cfg.prediction_neighbors,
            false,
            pipeline::predict_seed(cfg.seed),
        )
        .with_context(|| format!("predicting with model {}", model.name))?;
        let samples: Vec<Vec<f64>> = (0..pred.n_targets()).map(|j| pred.target_draws(j)).collect();
        reports.push(ScoreReport::compute(&model.name, &samples, &y, &groups, cfg.holdout.alpha)?);
    }
    write_reports_csv(&reports, BufWriter::new(File::create(rec.output("scores.csv"))?))?;
    let table = format_table(&reports, cfg.holdout.alpha);
    std::fs::write(rec.output("table.txt"), &table)?;
    print!("{table}");
    rec.finish(cfg)?;
    Ok(())
}

pub fn assess(cfg: &RunConfig) -> Result<()> {
    let dir = create_dir(&cfg.out.join("assess"))?;
    let mut rec = Recorder::new("assess", &dir);
    let fitted = load_fit(cfg, &mut rec)?;
    let ds = &fitted.dataset;
    let cells = pipeline::grid_cells(ds, &cfg.grid)?;
    let (start, end) = whole_days(pipeline::grid_hours(ds, &cfg.grid)?, cfg.grid.start.is_some() || cfg.grid.end.is_some())?;
    let hours = (end - start + 1) as usize;
    let targets = grid_targets(&cells, (start, end));
    let draws = pipeline::thin_draws(&fitted.draws, cfg.grid.max_draws);
    eprintln!(
        "assessing {} cells over {} days with {} draws",
        cells.len(),
        hours / 24,
        draws.len()
    );
    let pred = pipeline::predict_at(
        ds,
        &fitted.data.reference,
        &draws,
        targets,
        &cfg.prediction_neighbors,
        cfg.grid.hull_check,
        pipeline::predict_seed(cfg.seed),
    )?;
    let per_cell: Vec<DMatrix<f64>> = (0..cells.len())
        .map(|c| pred.observable.columns(c * hours, hours).into_owned())
        .collect();
    let report = posterior_compliance(&per_cell, &cfg.limits, &cfg.risk)?;
    let day_label = |d: usize| ds.timestamp(start + 24 * d as i64).date().to_string();

    let mut wtr = csv_writer(&rec.output("cell_days.csv"))?;
    wtr.write_record(["lon", "lat", "day", "p_exceed", "r_mean", "r_lo", "r_hi", "no_nights"])?;
    for cd in &report.cell_days {
        let (lon, lat) = pipeline::lon_lat(ds, &cells[cd.cell]);
        wtr.write_record([
            lon.to_string(),
            lat.to_string(),
            day_label(cd.day),
            cd.p_exceed.to_string(),
            cd.risk.mean.to_string(),
            cd.risk.lo.to_string(),
            cd.risk.hi.to_string(),
            cd.no_nights.to_string(),
        ])?;
    }
    wtr.flush()?;

    let mut wtr = csv_writer(&rec.output("daily.csv"))?;
    wtr.write_record([
        "day", "prop_mean", "prop_lo", "prop_hi", "r_mean", "r_lo", "r_hi", "r_max_mean", "r_max_lo", "r_max_hi",
    ])?;
    for d in &report.daily {
        wtr.write_record([
            day_label(d.day),
            d.proportion.mean.to_string(),
            d.proportion.lo.to_string(),
            d.proportion.hi.to_string(),
            d.risk_mean.mean.to_string(),
            d.risk_mean.lo.to_string(),
            d.risk_mean.hi.to_string(),
            d.risk_max.mean.to_string(),
            d.risk_max.lo.to_string(),
            d.risk_max.hi.to_string(),
        ])?;
    }
    wtr.flush()?;

    let mut wtr = csv_writer(&rec.output("locations.csv"))?;
    wtr.write_record([
        "lon", "lat", "exceed_day_fraction", "r_mean", "r_lo", "r_hi", "r_max_mean", "r_max_lo", "r_max_hi",
    ])?;
    for l in &report.locations {
        let (lon, lat) = pipeline::lon_lat(ds, &cells[l.cell]);
        wtr.write_record([
            lon.to_string(),
            lat.to_string(),
            l.exceed_day_fraction.to_string(),
            l.risk_mean.mean.to_string(),
            l.risk_mean.lo.to_string(),
            l.risk_mean.hi.to_string(),
            l.risk_max.mean.to_string(),
            l.risk_max.lo.to_string(),
            l.risk_max.hi.to_string(),
        ])?;
    }
    wtr.flush()?;

    let no_nights: Vec<String> = report
        .daily
        .iter()
        .filter(|d| report.cell_days.iter().any(|c| c.day == d.day && c.no_nights))
        .map(|d| day_label(d.day))
        .collect();
    if !no_nights.is_empty() {
        rec.warn(format!(
            "no preceding night available on {}; nighttime ozone term set to 0",
            no_nights.join(", ")
        ));
    }
    if cfg.grid.write_draws {
        write_draws(&rec.output("draws.csv"), &pred)?;
    }
    rec.finish(cfg)?;
    Ok(())
}

/// Trims an hour range to whole days; an explicit range must already be whole days.
fn whole_days((start, end): (i64, i64), explicit: bool) -> Result<(i64, i64)> {
    let s = start.div_euclid(24) * 24 + if start.rem_euclid(24) == 0 { 0 } else { 24 };
    let e = (end + 1).div_euclid(24) * 24 - 1;
    if explicit && (s != start || e != end) {
        bail!("assess needs grid.start at midnight and grid.end at 23:00");
    }
    if e < s + 23 {
        bail!("assess needs at least one whole day of hours");
    }
    Ok((s, e))
}

pub fn validate_kernel(cfg: &RunConfig) -> Result<()> {
    let families: Vec<Family> = if cfg.validate.families.is_empty() {
        Family::ALL.to_vec()
    } else {
        cfg.validate
            .families
            .iter()
            .map(|n| Family::from_name(n).with_context(|| format!("unknown kernel family `{n}`")))
            .collect::<Result<_>>()?
    };
    let dir = create_dir(&cfg.out.join("validate"))?;
    let mut rec = Recorder::new("validate-kernel", &dir);
    let mut wtr = csv_writer(&rec.output("psd.csv"))?;
    wtr.write_record(["family", "designs", "points", "failures", "worst_relative_min_eigenvalue"])?;
    let mut failed = Vec::new();
    for f in families {
        let report = validate_psd(&catalog::default_for(f), cfg.validate.designs, cfg.validate.points, cfg.seed);
        println!(
            "{:<34} {:>4}/{:<4} passed  worst {:+.3e}",
            f.name(),
            report.designs.len() - report.failures(),
            report.designs.len(),
            report.worst()
        );
        if !report.all_passed() {
            failed.push(f.name());
        }
        wtr.write_record([
            f.name().to_string(),
            report.designs.len().to_string(),
            cfg.validate.points.to_string(),
            report.failures().to_string(),
            report.worst().to_string(),
        ])?;
    }
    wtr.flush()?;
    drop(wtr);
    rec.finish(cfg)?;
    if !failed.is_empty() {
        bail!("positive semidefiniteness failed for {}", failed.join(", "));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_day_trimming() {
        assert_eq!(whole_days((0, 239), false).unwrap(), (0, 239));
        assert_eq!(whole_days((5, 250), false).unwrap(), (24, 239));
        assert!(whole_days((5, 250), true).is_err());
        assert!(whole_days((0, 20), false).is_err());
    }
}
