//! Command-line orchestration of the subtyping pipeline: INI configuration,
//! per-stage seeds, run directories with manifests, and one function per
//! subcommand.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{execute, Command};
pub use config::{Overrides, PipelineConfig};
pub use error::CliError;
