//! Configuration, execution and output for the `kadhop` command.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
pub use run::{execute, run};
