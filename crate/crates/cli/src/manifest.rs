use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{sha256_hex, RunConfig};

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub core_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub fit_hash: String,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
    pub warnings: Vec<String>,
    pub config: RunConfig,
}

/// Collects outputs and warnings while a command runs.
pub struct Recorder {
    command: String,
    dir: PathBuf,
    started: Instant,
    files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Recorder {
    pub fn new(command: &str, dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            dir: dir.to_path_buf(),
            started: Instant::now(),
            files: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Registers a file written under the command's directory.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn finish(self, cfg: &RunConfig) -> Result<PathBuf> {
        let outputs = self
            .files
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(OutputFile {
                    file: p
                        .file_name()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            core_version: qpgp_core::VERSION.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            fit_hash: cfg.fit_hash(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs,
            warnings: self.warnings,
            config: cfg.clone(),
        };
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&m)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
