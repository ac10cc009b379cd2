//! Command-line front end: config loading, cached artifact stages and the
//! subcommand implementations.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Command, Invocation};
pub use config::{Overrides, RunConfig};
pub use error::CliError;
