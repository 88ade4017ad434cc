//! Experiment grids: flat `key = value` configuration, the worker pool that
//! runs `cell × method × rate × split × repeat`, and record summaries.

mod config;
mod report;
mod run;

pub use config::{DatasetSpec, ExperimentConfig, GridCell, MethodSpec, GRID_KEYS, PROTOCOL_KEYS};
pub use report::{best_by_validation, mean_std, read_records, render_summary, summarize, write_record, SummaryRow};
pub use run::{load_experiment_data, run_experiment, run_seed, split_seed, worker_threads, RunRecord, THREADS_ENV};
