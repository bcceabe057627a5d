//! Experiment plumbing: configuration files, multi-seed runs with CSV
//! metrics, run comparison and plot-data export.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod export;
pub mod metrics;

pub use compare::{compare, ComparisonTable};
pub use config::{ExperimentConfig, SEED_OFFSET_VAR};
pub use experiment::{preset, run_experiment, run_suite, RunOutcome, SeedOutcome};
pub use export::{plot_data, PlotData};
pub use metrics::{MetricsTable, METRIC_COLUMNS};
