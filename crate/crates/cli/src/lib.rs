//! Experiment orchestration around `sldp-core`: declarative run
//! configuration, a catalog of named parameter presets, runners for each
//! experiment kind, and deterministic CSV emission.

pub mod config;
pub mod presets;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use runner::RunOutcome;
