//! Station coordinates, planar projection and the (h, θ, u) lag decomposition.
//!
//! Every kernel in [`crate::kernels`] is a function of three nonnegative lags:
//! the planar distance `h` in km, the circular (time-of-day) distance `θ` in
//! radians and the linear time distance `u` in hours.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Length of the daily cycle in hours.
pub const DAY_HOURS: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationLocation {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

impl StationLocation {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64) -> Self {
        Self {
            id: id.into(),
            lat,
            lon,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat)) {
            return Err(Error::InvalidInput(format!(
                "station `{}`: latitude {} outside [-90, 90]",
                self.id, self.lat
            )));
        }
        if !(self.lon.is_finite() && (-180.0..=180.0).contains(&self.lon)) {
            return Err(Error::InvalidInput(format!(
                "station `{}`: longitude {} outside [-180, 180]",
                self.id, self.lon
            )));
        }
        Ok(())
    }
}

/// Kilometres east (`x`) and north (`y`) of the projection center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarCoord {
    pub x: f64,
    pub y: f64,
}

impl PlanarCoord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &PlanarCoord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A planar location plus time in hours from the dataset epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub coord: PlanarCoord,
    pub t: f64,
}

impl SpaceTimePoint {
    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Self {
            coord: PlanarCoord { x, y },
            t,
        }
    }

    /// Position on the daily clock, in radians.
    pub fn clock_angle(&self) -> f64 {
        2.0 * PI * self.t.rem_euclid(DAY_HOURS) / DAY_HOURS
    }
}

/// Spatial, circular and linear lags between two space-time points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagTriple {
    pub h: f64,
    pub theta: f64,
    pub u: f64,
}

impl LagTriple {
    pub const ZERO: LagTriple = LagTriple {
        h: 0.0,
        theta: 0.0,
        u: 0.0,
    };

    pub const fn new(h: f64, theta: f64, u: f64) -> Self {
        Self { h, theta, u }
    }

    /// Lag to the same location at time distance `u` on a 24-hour clock.
    pub fn temporal(u: f64) -> Self {
        Self {
            h: 0.0,
            theta: circular_lag(0.0, u, DAY_HOURS),
            u: u.abs(),
        }
    }

    /// Checks `h ≥ 0`, `θ ∈ [0, π]`, `u ≥ 0`, all finite.
    pub fn validate(&self) -> Result<()> {
        let ok = self.h.is_finite()
            && self.theta.is_finite()
            && self.u.is_finite()
            && self.h >= 0.0
            && self.u >= 0.0
            && (0.0..=PI + 1e-12).contains(&self.theta);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "lag (h={}, theta={}, u={}) outside [0,inf) x [0,pi] x [0,inf)",
                self.h, self.theta, self.u
            )))
        }
    }
}

/// Local equirectangular projection around `center` (default: the centroid).
pub fn project(
    stations: &[StationLocation],
    center: Option<&StationLocation>,
) -> Result<Vec<PlanarCoord>> {
    if stations.is_empty() {
        return Err(Error::InvalidInput("no stations to project".into()));
    }
    for s in stations {
        s.check()?;
    }
    let (lat0, lon0) = match center {
        Some(c) => {
            c.check()?;
            (c.lat, c.lon)
        }
        None => centroid(stations),
    };
    let cos_lat0 = lat0.to_radians().cos();
    Ok(stations
        .iter()
        .map(|s| PlanarCoord {
            x: EARTH_RADIUS_KM * cos_lat0 * (s.lon - lon0).to_radians(),
            y: EARTH_RADIUS_KM * (s.lat - lat0).to_radians(),
        })
        .collect())
}

/// Arithmetic mean of latitudes and longitudes.
pub fn centroid(stations: &[StationLocation]) -> (f64, f64) {
    let n = stations.len() as f64;
    let lat = stations.iter().map(|s| s.lat).sum::<f64>() / n;
    let lon = stations.iter().map(|s| s.lon).sum::<f64>() / n;
    (lat, lon)
}

/// Inverse of [`project`] for a known center. Used to report grid cells in degrees.
pub fn unproject(coord: &PlanarCoord, lat0: f64, lon0: f64) -> (f64, f64) {
    let lat = lat0 + (coord.y / EARTH_RADIUS_KM).to_degrees();
    let lon = lon0 + (coord.x / (EARTH_RADIUS_KM * lat0.to_radians().cos())).to_degrees();
    (lat, lon)
}

/// Great-circle distance between two times placed on a clock of length `period`.
///
/// Returns a value in `[0, π]`; non-finite inputs give NaN.
pub fn circular_lag(t1: f64, t2: f64, period: f64) -> f64 {
    debug_assert!(period > 0.0);
    let m = (t1 - t2).abs() % period;
    let m = m.min(period - m);
    (2.0 * PI / period) * m
}

pub fn lag_triple(p1: &SpaceTimePoint, p2: &SpaceTimePoint) -> LagTriple {
    LagTriple {
        h: p1.coord.distance(&p2.coord),
        theta: circular_lag(p1.t, p2.t, DAY_HOURS),
        u: (p1.t - p2.t).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn haversine(a: &StationLocation, b: &StationLocation) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let dp = p2 - p1;
        let dl = (b.lon - a.lon).to_radians();
        let s = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_KM * s.sqrt().asin()
    }

    #[test]
    fn center_maps_to_origin() {
        let c = StationLocation::new("c", 19.4, -99.1);
        let xy = project(std::slice::from_ref(&c), Some(&c)).unwrap();
        assert_eq!(xy[0], PlanarCoord::new(0.0, 0.0));
    }

    #[test]
    fn one_degree_steps() {
        let c = StationLocation::new("c", 19.4, -99.1);
        let north = StationLocation::new("n", 20.4, -99.1);
        let east = StationLocation::new("e", 19.4, -98.1);
        let xy = project(&[north.clone(), east.clone()], Some(&c)).unwrap();
        assert!((xy[0].y - 111.19).abs() < 0.01, "{}", xy[0].y);
        let expected_dx = EARTH_RADIUS_KM * 19.4f64.to_radians().cos() * 1f64.to_radians();
        assert!((xy[1].x - expected_dx).abs() < 1e-9);
        assert!((xy[1].x - 104.87).abs() < 0.015, "{}", xy[1].x);
        let hn = haversine(&c, &north);
        let he = haversine(&c, &east);
        assert!((xy[0].y - hn).abs() / hn < 0.005);
        assert!((xy[1].x - he).abs() / he < 0.005);
    }

    #[test]
    fn out_of_range_rejected() {
        let bad = StationLocation::new("bad", 91.0, 0.0);
        assert!(matches!(project(&[bad], None), Err(Error::InvalidInput(_))));
        let bad = StationLocation::new("bad", 0.0, -181.0);
        assert!(project(&[bad], None).is_err());
        assert!(project(&[], None).is_err());
    }

    #[test]
    fn circular_lag_examples() {
        assert_eq!(circular_lag(24.0, 0.0, 24.0), 0.0);
        assert!((circular_lag(12.0, 0.0, 24.0) - PI).abs() < 1e-15);
        assert!((circular_lag(0.0, 30.0, 24.0) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn lag_triple_examples() {
        let p = SpaceTimePoint::new(1.0, 2.0, 5.0);
        assert_eq!(lag_triple(&p, &p), LagTriple::ZERO);
        let q = SpaceTimePoint::new(1.0, 2.0, 53.0);
        assert_eq!(lag_triple(&p, &q), LagTriple::new(0.0, 0.0, 48.0));
        let a = SpaceTimePoint::new(0.0, 0.0, 0.0);
        let b = SpaceTimePoint::new(3.0, 0.0, 25.0);
        let l = lag_triple(&a, &b);
        assert!((l.h - 3.0).abs() < 1e-15);
        assert!((l.theta - PI / 12.0).abs() < 1e-14);
        assert_eq!(l.u, 25.0);
    }

    #[test]
    fn unproject_inverts_project() {
        let c = StationLocation::new("c", 19.4, -99.1);
        let s = StationLocation::new("s", 19.5, -99.2);
        let xy = project(std::slice::from_ref(&s), Some(&c)).unwrap()[0];
        let (lat, lon) = unproject(&xy, c.lat, c.lon);
        assert!((lat - s.lat).abs() < 1e-12 && (lon - s.lon).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn circular_lag_symmetric_and_periodic(t1 in -1e4f64..1e4, t2 in -1e4f64..1e4, k in -50i32..50) {
            let a = circular_lag(t1, t2, 24.0);
            prop_assert_eq!(a, circular_lag(t2, t1, 24.0));
            prop_assert!((0.0..=PI).contains(&a));
            let shifted = circular_lag(t1 + 24.0 * k as f64, t2, 24.0);
            prop_assert!((a - shifted).abs() < 1e-9);
        }

        #[test]
        fn lag_triple_symmetric(x1 in -50f64..50.0, y1 in -50f64..50.0, t1 in 0f64..2000.0,
                                x2 in -50f64..50.0, y2 in -50f64..50.0, t2 in 0f64..2000.0) {
            let p = SpaceTimePoint::new(x1, y1, t1);
            let q = SpaceTimePoint::new(x2, y2, t2);
            prop_assert_eq!(lag_triple(&p, &q), lag_triple(&q, &p));
        }

        #[test]
        fn projection_matches_haversine_in_city_box(dlat in -0.45f64..0.45, dlon in -0.45f64..0.45) {
            let c = StationLocation::new("c", 19.4, -99.1);
            let s = StationLocation::new("s", 19.4 + dlat, -99.1 + dlon);
            let xy = project(std::slice::from_ref(&s), Some(&c)).unwrap()[0];
            let planar = xy.x.hypot(xy.y);
            let gc = haversine(&c, &s);
            prop_assume!(gc > 1e-3);
            prop_assert!((planar - gc).abs() / gc < 0.005);
        }
    }
}
