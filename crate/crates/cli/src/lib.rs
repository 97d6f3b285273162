//! Command-line front end for the `hhcs` library: subcommands wrapping single
//! library operations and a reproducible experiment runner.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
