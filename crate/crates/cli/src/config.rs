//! Run configuration: one JSON document with optional per-command blocks.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qpgp_core::compliance::{RegulatoryLimits, RiskParams};
use qpgp_core::data::SimulateConfig;
use qpgp_core::inference::McmcConfig;
use qpgp_core::kernels::{catalog, KernelSpec};
use qpgp_core::nngp::NeighborSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<DataConfig>,
    pub simulate: SimulateConfig,
    /// Kernel fitted by `fit`; the starting point for its free parameters.
    pub kernel: KernelSpec,
    /// Models compared by `score`; defaults to `kernel` alone.
    pub models: Vec<ModelConfig>,
    pub neighbors: NeighborSpec,
    pub prediction_neighbors: NeighborSpec,
    pub mcmc: McmcConfig,
    pub holdout: HoldoutConfig,
    pub grid: GridConfig,
    pub limits: RegulatoryLimits,
    pub risk: RiskParams,
    pub validate: ValidateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("qpgp-out"),
            data: None,
            simulate: SimulateConfig::default(),
            kernel: catalog::table2_model7(),
            models: Vec::new(),
            neighbors: NeighborSpec::default(),
            prediction_neighbors: NeighborSpec::prediction_default(),
            mcmc: McmcConfig::default(),
            holdout: HoldoutConfig::default(),
            grid: GridConfig::default(),
            limits: RegulatoryLimits::default(),
            risk: RiskParams::default(),
            validate: ValidateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub stations: PathBuf,
    pub records: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldoutConfig {
    /// Fraction of distinct hours withheld from `fit`; `score` always holds out.
    pub fraction: f64,
    /// Whether `fit` withholds the hours too.
    pub apply_to_fit: bool,
    /// Central interval level for coverage is `1 - alpha`.
    pub alpha: f64,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        Self {
            fraction: 0.2,
            apply_to_fit: false,
            alpha: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// CSV of `lon,lat,timestamp` targets; overrides the automatic grid in `predict`.
    pub targets: Option<PathBuf>,
    pub resolution_km: f64,
    /// Optional `[lon, lat]` vertices; cells must also fall inside their hull.
    pub polygon: Option<Vec<[f64; 2]>>,
    /// First and last hour of the automatic grid, ISO-8601.
    pub start: Option<String>,
    pub end: Option<String>,
    pub hull_check: bool,
    /// Evenly spaced posterior draws used for prediction; all when absent.
    pub max_draws: Option<usize>,
    pub write_draws: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            targets: None,
            resolution_km: 5.0,
            polygon: None,
            start: None,
            end: None,
            hull_check: true,
            max_draws: Some(200),
            write_draws: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Family names; every catalog family when empty.
    pub families: Vec<String>,
    pub designs: usize,
    pub points: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            families: Vec::new(),
            designs: 200,
            points: 40,
        }
    }
}

impl RunConfig {
    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = cfg.data.as_mut() {
            resolve(&mut d.stations);
            resolve(&mut d.records);
        }
        if let Some(t) = cfg.grid.targets.as_mut() {
            resolve(t);
        }
        resolve(&mut cfg.out);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.neighbors.validate()?;
        self.prediction_neighbors.validate()?;
        self.mcmc.validate()?;
        self.limits.validate()?;
        self.risk.validate()?;
        if !(0.0..1.0).contains(&self.holdout.fraction) {
            bail!("holdout.fraction must lie in [0, 1), got {}", self.holdout.fraction);
        }
        if !(self.holdout.alpha > 0.0 && self.holdout.alpha < 1.0) {
            bail!("holdout.alpha must lie in (0, 1), got {}", self.holdout.alpha);
        }
        if !(self.grid.resolution_km > 0.0 && self.grid.resolution_km.is_finite()) {
            bail!("grid.resolution_km must be positive");
        }
        if self.grid.max_draws == Some(0) {
            bail!("grid.max_draws must be at least 1");
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            bail!("model names must be unique");
        }
        Ok(())
    }

    /// Models for `score`.
    pub fn score_models(&self) -> Vec<ModelConfig> {
        if self.models.is_empty() {
            vec![ModelConfig {
                name: self.kernel.family().to_string(),
                kernel: self.kernel.clone(),
            }]
        } else {
            self.models.clone()
        }
    }

    /// Hash of the settings that determine a fit.
    pub fn fit_hash(&self) -> String {
        let v = serde_json::json!({
            "seed": self.seed,
            "data": self.data,
            "kernel": self.kernel,
            "neighbors": self.neighbors,
            "mcmc": self.mcmc,
            "holdout": self.holdout,
        });
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"mcmc": {"iters": 3}}"#).is_err());
    }

    #[test]
    fn fit_hash_ignores_unrelated_blocks() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.grid.resolution_km = 1.0;
        assert_eq!(a.fit_hash(), b.fit_hash());
        assert_ne!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.fit_hash(), b.fit_hash());
    }
}
