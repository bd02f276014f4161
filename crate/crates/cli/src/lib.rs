//! Command-line front end for the FBP noise experiments.

pub mod commands;
pub mod config;
pub mod plots;

pub use commands::Outcome;
pub use config::{ExperimentConfig, Overrides};
