//! Station/record tables, the sqrt-ozone regression design and synthetic data.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, project, unproject, PlanarCoord, SpaceTimePoint, StationLocation};
use crate::kernels::{catalog, gram, KernelSpec};

pub const COVARIATES: [&str; 3] = ["intercept", "rh", "tmp"];
const STATION_COLUMNS: [&str; 3] = ["id", "lat", "lon"];
const RECORD_COLUMNS: [&str; 5] = ["station_id", "timestamp", "ozone", "rh", "tmp"];
/// Largest offset from a whole hour accepted for a timestamp.
const ALIGN_TOLERANCE_MIN: i64 = 5;
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub station: usize,
    /// Whole hours since [`Dataset::epoch`].
    pub hour: i64,
    pub ozone: f64,
    pub rh: f64,
    pub tmp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub stations: Vec<StationLocation>,
    /// Projected station coordinates, centered on the station centroid.
    pub coords: Vec<PlanarCoord>,
    pub records: Vec<Record>,
    /// Midnight before the first record.
    pub epoch: NaiveDateTime,
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_local());
    }
    for fmt in [TIMESTAMP_FORMAT, "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists"));
    }
    Err(Error::Schema(format!("unrecognized timestamp `{s}`")))
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn require_columns(headers: &csv::StringRecord, required: &[&str], file: &str) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(c))
                .ok_or_else(|| Error::Schema(format!("{file}: missing column `{c}`")))
        })
        .collect()
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, col: &str, file: &str, row: usize) -> Result<&'a str> {
    match rec.get(idx).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Schema(format!("{file} row {row}: empty `{col}`"))),
    }
}

fn number(rec: &csv::StringRecord, idx: usize, col: &str, file: &str, row: usize) -> Result<f64> {
    let s = field(rec, idx, col, file, row)?;
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Schema(format!("{file} row {row}: `{col}` = `{s}` is not a finite number"))),
    }
}

pub fn ingest(stations: &Path, records: &Path) -> Result<Dataset> {
    let s = std::fs::File::open(stations)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", stations.display())))?;
    let r = std::fs::File::open(records)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", records.display())))?;
    ingest_readers(s, r)
}

/// Validates and joins the two tables. Rows are numbered from 1 after the header.
pub fn ingest_readers<S: Read, R: Read>(stations: S, records: R) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(stations);
    let cols = require_columns(rdr.headers()?, &STATION_COLUMNS, "stations.csv")?;
    let mut locs = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let id = field(&rec, cols[0], "id", "stations.csv", row)?.to_string();
        let lat = number(&rec, cols[1], "lat", "stations.csv", row)?;
        let lon = number(&rec, cols[2], "lon", "stations.csv", row)?;
        if index.insert(id.clone(), locs.len()).is_some() {
            return Err(Error::Schema(format!("stations.csv row {row}: duplicate id `{id}`")));
        }
        locs.push(StationLocation::new(id, lat, lon));
    }
    if locs.is_empty() {
        return Err(Error::Schema("stations.csv: no stations".into()));
    }
    let coords = project(&locs, None)?;

    let mut rdr = csv::Reader::from_reader(records);
    let cols = require_columns(rdr.headers()?, &RECORD_COLUMNS, "records.csv")?;
    let mut raw = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let sid = field(&rec, cols[0], "station_id", "records.csv", row)?;
        let station = *index
            .get(sid)
            .ok_or_else(|| Error::Schema(format!("records.csv row {row}: unknown station `{sid}`")))?;
        let ts = parse_timestamp(field(&rec, cols[1], "timestamp", "records.csv", row)?)
            .map_err(|e| Error::Schema(format!("records.csv row {row}: {e}")))?;
        let ozone = number(&rec, cols[2], "ozone", "records.csv", row)?;
        if ozone < 0.0 {
            return Err(Error::InvalidInput(format!(
                "records.csv row {row}: negative ozone {ozone}"
            )));
        }
        let rh = number(&rec, cols[3], "rh", "records.csv", row)?;
        let tmp = number(&rec, cols[4], "tmp", "records.csv", row)?;
        raw.push((row, station, ts, ozone, rh, tmp));
    }
    let Some(first) = raw.iter().map(|r| r.2).min() else {
        return Err(Error::Schema("records.csv: no records".into()));
    };
    let epoch = first.date().and_hms_opt(0, 0, 0).expect("midnight exists");
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for (row, station, ts, ozone, rh, tmp) in raw {
        let minutes = (ts - epoch).num_minutes();
        let hour = (minutes + 30).div_euclid(60);
        if (minutes - hour * 60).abs() > ALIGN_TOLERANCE_MIN {
            return Err(Error::InvalidInput(format!(
                "records.csv row {row}: timestamp {} is not on the hour",
                format_timestamp(&ts)
            )));
        }
        if !seen.insert((station, hour)) {
            return Err(Error::InvalidInput(format!(
                "records.csv row {row}: duplicate record for station `{}` at {}",
                locs[station].id,
                format_timestamp(&ts)
            )));
        }
        out.push(Record {
            station,
            hour,
            ozone,
            rh,
            tmp,
        });
    }
    Ok(Dataset {
        stations: locs,
        coords,
        records: out,
        epoch,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn points(&self) -> Vec<SpaceTimePoint> {
        self.records
            .iter()
            .map(|r| {
                let c = self.coords[r.station];
                SpaceTimePoint::new(c.x, c.y, r.hour as f64)
            })
            .collect()
    }

    /// Square-root ozone.
    pub fn response(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ozone.sqrt()).collect()
    }

    /// Columns intercept, RH, TMP.
    pub fn design(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 3, |i, j| match j {
            0 => 1.0,
            1 => self.records[i].rh,
            _ => self.records[i].tmp,
        })
    }

    pub fn covariate_names(&self) -> Vec<String> {
        COVARIATES.iter().map(|s| s.to_string()).collect()
    }

    pub fn hours(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.hour as f64).collect()
    }

    pub fn timestamp(&self, hour: i64) -> NaiveDateTime {
        self.epoch + Duration::hours(hour)
    }

    /// Projection center in degrees.
    pub fn center(&self) -> (f64, f64) {
        centroid(&self.stations)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            stations: self.stations.clone(),
            coords: self.coords.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            epoch: self.epoch,
        }
    }

    /// Station covariates at each observed hour, for interpolation.
    pub fn covariates_by_hour(&self) -> BTreeMap<i64, Vec<(PlanarCoord, Vec<f64>)>> {
        let mut out: BTreeMap<i64, Vec<(PlanarCoord, Vec<f64>)>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.hour)
                .or_default()
                .push((self.coords[r.station], vec![r.rh, r.tmp]));
        }
        out
    }

    pub fn write_stations<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(STATION_COLUMNS)?;
        for s in &self.stations {
            wtr.write_record([s.id.clone(), s.lat.to_string(), s.lon.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_records<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(RECORD_COLUMNS)?;
        for r in &self.records {
            wtr.write_record([
                self.stations[r.station].id.clone(),
                format_timestamp(&self.timestamp(r.hour)),
                r.ozone.to_string(),
                r.rh.to_string(),
                r.tmp.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Synthetic network and hourly record settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_stations: usize,
    pub hours: usize,
    pub start: String,
    pub center_lat: f64,
    pub center_lon: f64,
    /// Side of the square box the stations are scattered in.
    pub extent_km: f64,
    pub kernel: KernelSpec,
    pub tau2: f64,
    pub beta: Vec<f64>,
    pub max_points: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_stations: 10,
            hours: 240,
            start: "2017-04-01T00:00:00".into(),
            center_lat: 19.4,
            center_lon: -99.1,
            extent_km: 40.0,
            kernel: catalog::table2_model7(),
            tau2: catalog::TABLE2_TAU2,
            beta: catalog::TABLE2_BETA.to_vec(),
            max_points: 3000,
        }
    }
}

/// Parameters used to generate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub kernel: KernelSpec,
    pub tau2: f64,
    pub beta: Vec<f64>,
    /// Latent field at every record, in record order.
    pub w: Vec<f64>,
}

/// Draws a dataset from the dense Gaussian process on the sqrt scale and
/// reports ozone as the square.
pub fn simulate(config: &SimulateConfig, seed: u64) -> Result<(Dataset, Truth)> {
    let n = config.n_stations * config.hours;
    if config.n_stations == 0 || config.hours == 0 {
        return Err(Error::InvalidInput("simulation needs stations and hours".into()));
    }
    if n > config.max_points {
        return Err(Error::InvalidInput(format!(
            "{} stations x {} hours = {n} points exceeds the dense simulation limit of {}; use fewer stations or hours",
            config.n_stations, config.hours, config.max_points
        )));
    }
    if config.beta.len() != COVARIATES.len() {
        return Err(Error::DimensionMismatch {
            expected: COVARIATES.len(),
            found: config.beta.len(),
        });
    }
    if !(config.tau2 >= 0.0 && config.tau2.is_finite()) {
        return Err(Error::invalid_param("tau2", config.tau2, "must be >= 0"));
    }
    let start = parse_timestamp(&config.start)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let half = config.extent_km / 2.0;
    let stations: Vec<StationLocation> = (0..config.n_stations)
        .map(|k| {
            let c = PlanarCoord::new(rng.random_range(-half..half), rng.random_range(-half..half));
            let (lat, lon) = unproject(&c, config.center_lat, config.center_lon);
            StationLocation::new(format!("S{:02}", k + 1), lat, lon)
        })
        .collect();
    let coords = project(&stations, None)?;
    let epoch = start.date().and_hms_opt(0, 0, 0).expect("midnight exists");
    let offset = (start - epoch).num_hours();

    let station_rh: Vec<f64> = (0..config.n_stations).map(|_| rng.random_range(-5.0..5.0)).collect();
    let station_tmp: Vec<f64> = (0..config.n_stations).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut records = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let noise_rh = Normal::new(0.0, 4.0).expect("valid sd");
    let noise_tmp = Normal::new(0.0, 1.0).expect("valid sd");
    for h in 0..config.hours as i64 {
        let hour = offset + h;
        let phase = 2.0 * std::f64::consts::PI * (hour.rem_euclid(24) as f64) / 24.0;
        for s in 0..config.n_stations {
            let rh = (55.0 + 20.0 * (phase - 0.9).cos() + station_rh[s] + rng.sample(noise_rh)).clamp(5.0, 100.0);
            let tmp = 17.0 + 6.0 * (phase - 3.9).cos() + station_tmp[s] + rng.sample(noise_tmp);
            records.push(Record {
                station: s,
                hour,
                ozone: 0.0,
                rh,
                tmp,
            });
            points.push(SpaceTimePoint::new(coords[s].x, coords[s].y, hour as f64));
        }
    }

    let sigma2 = config.kernel.sigma2();
    let w: Vec<f64> = if sigma2 == 0.0 {
        vec![0.0; n]
    } else {
        let c = gram(&config.kernel, &points, 1e-10 * sigma2)?.into_inner();
        let l = c
            .cholesky()
            .ok_or_else(|| Error::Numerical {
                node: 0,
                reason: "dense simulation covariance is not positive definite".into(),
            })?
            .l();
        let z = nalgebra::DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (l * z).as_slice().to_vec()
    };
    let tau = config.tau2.sqrt();
    for (i, r) in records.iter_mut().enumerate() {
        let mean = config.beta[0] + config.beta[1] * r.rh + config.beta[2] * r.tmp;
        let eps = if tau > 0.0 {
            tau * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let y = mean + w[i] + eps;
        r.ozone = y * y;
    }
    Ok((
        Dataset {
            stations,
            coords,
            records,
            epoch,
        },
        Truth {
            seed,
            kernel: config.kernel.clone(),
            tau2: config.tau2,
            beta: config.beta.clone(),
            w,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const STATIONS: &str = "id,lat,lon\nA,19.40,-99.10\nB,19.45,-99.15\n";

    #[test]
    fn well_formed_two_stations() {
        let rec = "station_id,timestamp,ozone,rh,tmp\nA,2017-04-01T00:00:00,40,50,20\nB,2017-04-01T01:00:00,36,52,19\nA,2017-04-01 02:00:00,49,51,18\n";
        let d = ingest_readers(STATIONS.as_bytes(), rec.as_bytes()).unwrap();
        assert_eq!(d.stations.len(), 2);
        assert_eq!(d.hours(), vec![0.0, 1.0, 2.0]);
        assert_eq!(d.response(), vec![40f64.sqrt(), 6.0, 7.0]);
        assert_eq!(d.design().row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 52.0, 19.0]);
    }

    #[test]
    fn missing_column_named() {
        let rec = "station_id,timestamp,ozone,tmp\nA,2017-04-01T00:00:00,40,20\n";
        let err = ingest_readers(STATIONS.as_bytes(), rec.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("`rh`"), "{err}");
    }

    #[test]
    fn bad_rows_rejected() {
        let neg = "station_id,timestamp,ozone,rh,tmp\nA,2017-04-01T00:00:00,-1,50,20\n";
        let err = ingest_readers(STATIONS.as_bytes(), neg.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        let dup = "station_id,timestamp,ozone,rh,tmp\nA,2017-04-01T00:00:00,1,50,20\nA,2017-04-01T00:01:00,1,50,20\n";
        assert!(ingest_readers(STATIONS.as_bytes(), dup.as_bytes()).is_err());
        let off = "station_id,timestamp,ozone,rh,tmp\nA,2017-04-01T00:20:00,1,50,20\n";
        assert!(ingest_readers(STATIONS.as_bytes(), off.as_bytes()).is_err());
        let unknown = "station_id,timestamp,ozone,rh,tmp\nZ,2017-04-01T00:00:00,1,50,20\n";
        assert!(ingest_readers(STATIONS.as_bytes(), unknown.as_bytes()).is_err());
    }

    #[test]
    fn roundtrip_through_csv() {
        let cfg = SimulateConfig {
            n_stations: 3,
            hours: 30,
            ..SimulateConfig::default()
        };
        let (d, _) = simulate(&cfg, 4).unwrap();
        let mut s = Vec::new();
        let mut r = Vec::new();
        d.write_stations(&mut s).unwrap();
        d.write_records(&mut r).unwrap();
        let back = ingest_readers(s.as_slice(), r.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn noiseless_simulation_is_mean_squared() {
        let cfg = SimulateConfig {
            n_stations: 2,
            hours: 10,
            kernel: catalog::table2_model7().with_sigma2(0.0).unwrap(),
            tau2: 0.0,
            ..SimulateConfig::default()
        };
        let (d, t) = simulate(&cfg, 1).unwrap();
        for r in &d.records {
            let m = t.beta[0] + t.beta[1] * r.rh + t.beta[2] * r.tmp;
            assert_eq!(r.ozone, m * m);
        }
        assert_eq!(simulate(&cfg, 1).unwrap().0, d);
    }

    #[test]
    fn oversized_grid_rejected() {
        let cfg = SimulateConfig {
            n_stations: 30,
            hours: 200,
            ..SimulateConfig::default()
        };
        let err = simulate(&cfg, 1).unwrap_err().to_string();
        assert!(err.contains("fewer"), "{err}");
    }
}
