//! Config-driven experiment runner around `ngdpinn-core`.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_str, parse_config_with, ConfigError, Mode, Overrides, RunConfig};
pub use run::{exit, run, RunError, RunManifest, Status};
