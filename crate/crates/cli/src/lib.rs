//! Configuration, synthetic data, and experiment orchestration for the
//! `datapricer` command-line tool.

pub mod config;
mod error;
pub mod output;
pub mod run;
pub mod synthetic;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult, ErrorKind};
pub use run::{emit_plot_data, run_experiment, RunRecord, Series, Session, StepRecord};
pub use synthetic::generate_synthetic;
