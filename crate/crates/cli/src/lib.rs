//! Command-line front end: training runs, bound audits, sweeps, Monte Carlo
//! noise checks and plots, with their file formats.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod report;
pub mod sweep;
pub mod verify;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
