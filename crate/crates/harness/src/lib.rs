//! Experiment orchestration: config files, the environment registry, the
//! grid runner, metrics CSVs and plot-data export.

pub mod config;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod plots;
pub mod solve;

pub use config::{EnvSpec, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, CellResult, Summary, SummaryCell};
pub use metrics::{MetricsRow, COLUMNS};
pub use plots::{export_plot_data, CellSelector, Series};

/// Environment variable naming the root directory for outputs.
pub const OUTPUT_ENV: &str = "CONTRACTING_OUTPUT";
