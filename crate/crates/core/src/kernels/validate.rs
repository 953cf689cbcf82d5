use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::gram::gram;
use super::spec::{Bound, KernelSpec};
use super::Covariance;
use crate::geometry::SpaceTimePoint;

/// A design fails when `λ_min < -PSD_RELATIVE_TOLERANCE · λ_max`.
pub const PSD_RELATIVE_TOLERANCE: f64 = 1e-8;

const BOX_KM: f64 = 60.0;
const BOX_HOURS: f64 = 61.0 * 24.0;

#[derive(Debug, Clone, Serialize)]
pub struct DesignOutcome {
    pub design: usize,
    pub relative_min_eigenvalue: f64,
    pub passed: bool,
    /// Free parameter values drawn for this design.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsdReport {
    pub label: String,
    pub designs: Vec<DesignOutcome>,
}

impl PsdReport {
    pub fn failures(&self) -> usize {
        self.designs.iter().filter(|d| !d.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn worst(&self) -> f64 {
        self.designs
            .iter()
            .map(|d| d.relative_min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Draws every free parameter uniformly over its sweep range; bounded
/// parameters are drawn on `(0, hi]`.
pub fn random_valid_params<R: Rng + ?Sized>(spec: &KernelSpec, rng: &mut R) -> KernelSpec {
    let values: Vec<f64> = spec
        .free_params()
        .iter()
        .map(|p| match p.bound {
            Bound::UpTo(hi) => hi * (1.0 - rng.random::<f64>()),
            Bound::Positive => rng.random_range(p.draw_range.0..p.draw_range.1),
        })
        .collect();
    spec.with_free_params(&values)
        .expect("draws respect parameter bounds")
}

fn random_design<R: Rng + ?Sized>(n_points: usize, rng: &mut R) -> Vec<SpaceTimePoint> {
    (0..n_points)
        .map(|_| {
            SpaceTimePoint::new(
                rng.random_range(0.0..BOX_KM),
                rng.random_range(0.0..BOX_KM),
                rng.random_range(0.0..BOX_HOURS),
            )
        })
        .collect()
}

/// Random-design positive semidefiniteness sweep for one catalog kernel.
///
/// Each design draws fresh valid parameters for the kernel's family and
/// `n_points` points in a 60 km × 61 day box.
pub fn validate_psd(spec: &KernelSpec, n_designs: usize, n_points: usize, seed: u64) -> PsdReport {
    let label = spec.family().to_string();
    let mut report = validate_psd_with(
        |rng| random_valid_params(spec, rng),
        n_designs,
        n_points,
        seed,
    );
    report.label = label;
    report
}

/// Sweep over an arbitrary kernel generator.
pub fn validate_psd_with<K, F>(mut draw: F, n_designs: usize, n_points: usize, seed: u64) -> PsdReport
where
    K: Covariance + ParamsView,
    F: FnMut(&mut ChaCha8Rng) -> K,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let designs = (0..n_designs.max(1))
        .map(|design| {
            let kernel = draw(&mut rng);
            let points = random_design(n_points.max(1), &mut rng);
            let g = gram(&kernel, &points, 0.0).expect("finite design points");
            let rel = g.relative_min_eigenvalue();
            DesignOutcome {
                design,
                relative_min_eigenvalue: rel,
                passed: rel >= -PSD_RELATIVE_TOLERANCE,
                params: kernel.param_values(),
            }
        })
        .collect();
    PsdReport {
        label: String::new(),
        designs,
    }
}

/// Parameter values recorded in a [`PsdReport`].
pub trait ParamsView {
    fn param_values(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl ParamsView for KernelSpec {
    fn param_values(&self) -> Vec<f64> {
        self.free_values()
    }
}
