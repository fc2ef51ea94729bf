//! Command-line driver: configuration, orchestration and data output.

pub mod commands;
pub mod config;
pub mod error;
pub mod figures;
pub mod oracle_suite;
pub mod output;
pub mod pipeline;

pub use config::{parse_config, RunConfig};
pub use error::CliError;
