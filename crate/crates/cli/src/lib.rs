//! Command-line driver: JSON configs in, CSV/JSON artifacts and a run
//! manifest out.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::{parse_config, parse_config_str, ConfigError, ScenarioConfig};
pub use manifest::{load_manifest, rerun, run, RunManifest, CONFIG_FILE, MANIFEST_FILE};
pub use run::{apply_overrides, execute, Experiment};
