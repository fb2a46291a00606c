//! Experiment plumbing: configuration, metrics CSV, checkpoints, runs and
//! cross-run comparison.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod experiment;
pub mod metrics;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use compare::{compare_runs, episodes_to_threshold, ComparisonSummary, PolicySummary, RunRecord};
pub use config::{load_run_config, parse_run_config, RunConfig, TaskDef};
pub use experiment::{
    build_environment, build_scheduler, sidecar_path, run_experiment, run_experiment_with, RunMeta, RunOutput,
};
pub use metrics::{read_metrics_csv, write_metrics_csv, without_wallclock, MetricsRow, MetricsTable, MetricsWriter};
