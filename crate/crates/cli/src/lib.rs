//! The `qmetro` command-line runner: configs in, timestamped run directories out.

pub mod cli;
pub mod config;
pub mod error;
pub mod greedy;
pub mod optimize;
pub mod plot;
pub mod run;
pub mod sweep;
pub mod table;

pub use error::CliError;
