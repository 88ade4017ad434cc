use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig, MethodSpec};
use crate::data::{generate_sbm, load_dataset_dir, make_split, Dataset, LoadOptions};
use crate::error::{Error, Result};
use crate::trainer::{run_altopt, run_baseline, run_inductive, LabelData, RunResult};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "ALTPROP_THREADS";

/// One finished run plus the coordinates that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub cell: usize,
    pub varying: BTreeMap<String, String>,
    pub label_rate: String,
    pub split: usize,
    pub repeat: usize,
    pub seed: u64,
    pub result: RunResult,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `split`-th data split.
pub fn split_seed(seed: u64, split: usize) -> u64 {
    splitmix(splitmix(seed) ^ split as u64)
}

/// Seed of one training run; distinct per `(seed, split, repeat)`.
pub fn run_seed(seed: u64, split: usize, repeat: usize) -> u64 {
    splitmix(split_seed(seed, split) ^ splitmix(repeat as u64 + 1))
}

/// Worker count: `ALTPROP_THREADS` if set, otherwise every available core.
pub fn worker_threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cap,
        _ => available,
    }
}

pub fn load_experiment_data(cfg: &ExperimentConfig) -> Result<Dataset<f64>> {
    match &cfg.dataset {
        DatasetSpec::Dir(dir) => load_dataset_dir(
            dir,
            LoadOptions {
                normalize_features: cfg.normalize_features,
            },
        ),
        DatasetSpec::Sbm(p) => generate_sbm(p),
    }
}

struct Task<'a> {
    cell: usize,
    method: MethodSpec,
    rate: usize,
    split: usize,
    repeat: usize,
    labels: &'a LabelData,
}

/// Run every `grid cell × method × label rate × split × repeat`. Tasks run
/// on a pool of [`worker_threads`] workers; records come back in task order
/// and `on_record` sees each one as it finishes.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    ds: &Dataset<f64>,
    on_record: &(dyn Fn(&RunRecord) + Sync),
) -> Result<Vec<RunRecord>> {
    let mut split_labels = Vec::new();
    for (r, &rate) in cfg.label_rates.iter().enumerate() {
        for split in 0..cfg.splits {
            let s = make_split(&ds.labels, ds.classes, rate, split_seed(cfg.seed, split))?;
            split_labels.push((r, split, LabelData::new(ds.labels.clone(), ds.classes, &s)?));
        }
    }
    let mut tasks = Vec::with_capacity(cfg.n_runs());
    for cell in &cfg.grid {
        for &method in &cfg.methods {
            for (rate, split, labels) in &split_labels {
                for repeat in 0..cfg.repeats {
                    tasks.push(Task {
                        cell: cell.index,
                        method,
                        rate: *rate,
                        split: *split,
                        repeat,
                        labels,
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let record = run_task(cfg, ds, t)?;
                on_record(&record);
                Ok(record)
            })
            .collect()
    })
}

fn run_task(cfg: &ExperimentConfig, ds: &Dataset<f64>, t: &Task<'_>) -> Result<RunRecord> {
    let cell = &cfg.grid[t.cell];
    let mut config = cell.config.clone();
    config.seed = run_seed(cfg.seed, t.split, t.repeat);
    // A private copy keeps the test-read audit per run.
    let labels = t.labels.clone();
    let mut result = match t.method {
        MethodSpec::AltOpt => run_altopt(&config, &ds.graph, &ds.features, &labels)?,
        MethodSpec::Baseline(kind) => run_baseline(kind, &config, &ds.graph, &ds.features, &labels)?,
        MethodSpec::Inductive => run_inductive(&config, &ds.graph, labels.train(), &ds.features, &labels)?,
    };
    if cfg.deterministic {
        result.wall_time_secs = 0.0;
    }
    Ok(RunRecord {
        dataset: ds.name.clone(),
        cell: t.cell,
        varying: cell.varying.clone(),
        label_rate: cfg.label_rates[t.rate].to_string(),
        split: t.split,
        repeat: t.repeat,
        seed: config.seed,
        result,
    })
}
