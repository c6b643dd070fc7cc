//! Experiment harness: TOML configs, benchmark oracles, replicated runs and
//! CSV output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod output;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{relative_average_regret, run_experiment, RunOptions, SimulationResult};
pub use oracle::{optimal_oracle, OracleResult};
pub use output::{emit_csv, emit_curves};
