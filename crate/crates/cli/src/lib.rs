//! Config-driven experiment runner: preprocess, split, synthesize, train and
//! report.

pub mod commands;
pub mod config;
mod error;
pub mod report;

pub use error::{CliError, CliResult};
