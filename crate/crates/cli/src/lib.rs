//! Command-line front end: dataset ingestion, the two tests, simulation and
//! the Monte Carlo experiment harness.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod report;

pub use error::{CliError, Result};
