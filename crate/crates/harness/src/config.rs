//! Declarative experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Every experiment the runner knows about.
pub const EXPERIMENTS: &[&str] = &[
    "kernel-table",
    "check-pnstar",
    "un",
    "second-moment",
    "moment-mc",
    "moment-exact",
    "erdos-taylor",
    "gaussian-limit",
    "chaos-oracle",
    "diagrams",
    "khas",
    "max-bound",
    "suite",
];

const STOCHASTIC: &[&str] = &["moment-mc", "erdos-taylor", "gaussian-limit", "khas", "suite"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_time: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ab_horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Standard-error multiplier for Monte Carlo comparisons.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    /// Relative tolerance for exact identities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel: Option<f64>,
}

impl Tolerances {
    pub fn z(&self) -> f64 {
        self.z.unwrap_or(3.0)
    }

    pub fn rel(&self) -> f64 {
        self.rel.unwrap_or(1e-10)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        ExperimentConfig {
            experiment: experiment.to_string(),
            seed: None,
            threads: 1,
            out: None,
            format: Format::Csv,
            params: Params::default(),
            tolerances: Tolerances::default(),
        }
    }

    /// Reads a TOML config, or the `config` section of a JSON manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let cfg: ExperimentConfig = if is_json {
            #[derive(Deserialize)]
            struct Wrapper {
                config: ExperimentConfig,
            }
            serde_json::from_str::<Wrapper>(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
                .config
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn is_stochastic(&self) -> bool {
        STOCHASTIC.contains(&self.experiment.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return bad(format!("unknown experiment '{}'", self.experiment));
        }
        if self.is_stochastic() && self.seed.is_none() {
            return bad(format!("experiment '{}' is stochastic and needs a seed", self.experiment));
        }
        for (name, v) in [("z", self.tolerances.z), ("rel", self.tolerances.rel)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("tolerance '{name}' must be positive, got {v}"));
                }
            }
        }
        if let Some(b) = self.params.beta_hat {
            if !(0.0..1.0).contains(&b) {
                return bad(format!(
                    "beta_hat = {b} is outside the subcritical window [0, 1)"
                ));
            }
        }
        if let Some(k2) = self.params.kappa_sq {
            if !(k2 >= 0.0 && k2.is_finite()) {
                return bad(format!("kappa_sq must be non-negative, got {k2}"));
            }
        }
        if let Some(g) = self.params.gamma {
            if !(g > 0.0) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        if self.params.samples == Some(0) {
            return bad("samples must be positive".into());
        }
        Ok(())
    }

    /// The metadata echoed into every output file: everything that affects the data.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("experiment".to_string(), self.experiment.clone()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("threads".to_string(), self.threads.to_string()),
        ];
        if let Some(s) = self.seed {
            out.push(("seed".to_string(), s.to_string()));
        }
        let params = toml::Value::try_from(&self.params).expect("params serialize");
        let tols = toml::Value::try_from(&self.tolerances).expect("tolerances serialize");
        for (prefix, v) in [("params", params), ("tolerances", tols)] {
            if let toml::Value::Table(t) = v {
                for (k, v) in t {
                    out.push((format!("{prefix}.{k}"), v.to_string()));
                }
            }
        }
        out
    }
}
