//! Experiment driver for the consensus toolkit: JSON configs, built-in
//! presets, trace CSVs and run summaries.

pub mod config;
pub mod presets;
pub mod run;
pub mod summary;
pub mod table;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{run, Outcome, Report, RunError};
