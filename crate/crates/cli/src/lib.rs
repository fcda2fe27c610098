//! Configuration-driven command-line front end for `impulsim-core`.

pub mod build;
pub mod config;
pub mod error;
pub mod presets;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
pub use run::{execute, main_with_args, run, Cli, Command, RunReport};
