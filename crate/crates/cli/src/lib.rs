//! Command-line surface for `lagsurv`: CSV ingestion, TOML run
//! configuration, manifests and the subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod manifest;

pub use commands::{run, Cli, Command};
pub use config::RunConfig;
pub use error::{CliError, Result};
