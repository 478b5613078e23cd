//! Command implementations behind the `hetinfomax` binary.

pub mod app;
pub mod config;
pub mod pipeline;

pub use config::{ConfigError, RunConfig, SCHEMA};
pub use pipeline::CliError;
