//! Experiment orchestration for the quadratic Hawkes laboratory: JSON
//! configs, reproducible parallel Monte Carlo runs, checksummed outputs and
//! reports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod report;
pub mod run;

pub use config::{load_config, parse_config, Experiment, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use output::{Check, RunManifest, Summary};
pub use report::emit_report;
pub use run::{check_config, default_output, run_experiment};
