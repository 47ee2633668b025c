//! Experiment runner behind the `qsync` command.
//!
//! A run is described by an [`ExperimentConfig`](config::ExperimentConfig):
//! an experiment preset, optionally adjusted by a key-value file and
//! `section.key=value` overrides. [`run_experiment`](experiments::run_experiment)
//! turns it into CSV artifacts whose metadata block embeds the resolved
//! configuration, so any output file can be fed back as `--config`.

pub mod artifact;
pub mod config;
pub mod error;
pub mod experiments;

pub use artifact::CsvArtifact;
pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, Result};
pub use experiments::run_experiment;
