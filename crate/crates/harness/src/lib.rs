//! Experiment runner for the `gaussian-polymer` toolkit: configuration,
//! dispatch, CSV/JSON output, manifests and the acceptance battery.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod output;

pub use config::{ExperimentConfig, Format};
pub use error::{HarnessError, Result};
pub use manifest::{run_experiment, ResultManifest};
