//! Command-line front end: configuration, correspondence files, experiment grids,
//! result files and built-in numerical checks.

pub mod config;
pub mod correspondences;
pub mod grid;
pub mod report;
pub mod runner;
pub mod selftest;

pub use config::{parse_config, parse_config_str, Command, ConfigError, Overrides, RunConfig};
pub use runner::{run, RunError, RunOutcome};
