//! Result manifests and the experiment runner.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format};
use crate::error::Result;
use crate::experiments::{compute, Check, Measurement, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub measurements: Vec<Measurement>,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Encodes the outcome's table in the configured format.
pub fn render(cfg: &ExperimentConfig, outcome: &Outcome) -> String {
    let meta = cfg.metadata();
    match cfg.format {
        Format::Csv => outcome.table.to_csv(&meta),
        Format::Json => outcome.table.to_json(&meta),
    }
}

pub fn data_path(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    dir.join(format!("{}.{}", cfg.experiment, cfg.format.extension()))
}

pub fn manifest_path(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    dir.join(format!("{}.manifest.json", cfg.experiment))
}

/// Runs the experiment; with `cfg.out` set, writes the data file and the manifest there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ResultManifest, Outcome)> {
    let start = Instant::now();
    let outcome = compute(cfg)?;
    let mut outputs = Vec::new();
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        let body = render(cfg, &outcome);
        let path = data_path(dir, cfg);
        std::fs::write(&path, &body)?;
        outputs.push(OutputDigest {
            file: path.file_name().expect("file name").to_string_lossy().into_owned(),
            sha256: sha256_hex(body.as_bytes()),
        });
    }
    let manifest = ResultManifest {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        pass: outcome.pass(),
        checks: outcome.checks.clone(),
        measurements: outcome.measurements.clone(),
        outputs,
    };
    if let Some(dir) = &cfg.out {
        let text = serde_json::to_string_pretty(&manifest).expect("manifest encodes");
        std::fs::write(manifest_path(dir, cfg), text + "\n")?;
    }
    Ok((manifest, outcome))
}
