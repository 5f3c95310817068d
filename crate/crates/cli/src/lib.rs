//! Command-line front end: `train`, `eval`, `sweep` and `plot`.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

pub use commands::{run, Cli, Command, Common};
pub use error::{CliError, CliResult};
