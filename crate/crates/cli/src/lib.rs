//! Command-line front end: one TOML run configuration shared by every
//! subcommand, with dotted `key=value` overrides.

pub mod commands;
pub mod config;

pub use commands::{run, Cli, CliError, Command};
pub use config::{apply_override, ConfigError, RunConfig};
