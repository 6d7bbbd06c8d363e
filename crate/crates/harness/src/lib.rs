//! Experiment harness: corpus generation, model training and the entropy
//! comparison between n-gram, Inside-Outside, induced and reference grammars.

pub mod config;
pub mod experiment;
pub mod models;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ExperimentReport, Family, ReportRow};
