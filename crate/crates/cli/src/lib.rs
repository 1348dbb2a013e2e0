//! Command-line front end for `oslr-core`: TOML run configuration, subject
//! CSV files, JSON reports and a rayon-backed replicate runner.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod parallel;
pub mod report;

pub use crate::error::CliError;
