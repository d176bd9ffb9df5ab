//! Seeded multi-replication experiments: configuration and presets, the
//! parallel runner, summary statistics and persisted outputs.

pub mod config;
pub mod output;
pub mod run;
pub mod stats;

pub use config::{ExperimentConfig, Preset};
pub use output::{emit_outputs, read_runs_csv, write_runs_csv, Summary};
pub use run::{run_experiment, ExperimentResults, RunRecord, RunStatus};
pub use stats::{rate_fit, regime_report, Quantity, RateFit, RegimeReport};
