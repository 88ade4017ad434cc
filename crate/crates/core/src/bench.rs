//! Counter and timing benchmark: one ALT-OPT run per round schedule, with
//! exact SpMM bookkeeping checked against the rule's per-step cost.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::graph::SparseGraph;
use crate::memory::{self, PeakMemory};
use crate::propagation::Rule;
use crate::scalar::Real;
use crate::trainer::{run_altopt, LabelData, Rounds, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub rounds: Rounds,
    /// Propagation rounds actually run (`k`, or `e` for full mode).
    pub k: usize,
    pub layers: usize,
    pub rule: Rule,
    pub f_spmm: u64,
    /// `k · K · rule cost`.
    pub expected_f_spmm: u64,
    pub diffusion_spmm: u64,
    pub expected_diffusion_spmm: u64,
    pub peak_memory: PeakMemory,
    pub wall_time_secs: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

impl BenchRow {
    /// Both counters equal their closed-form expectation.
    pub fn counters_exact(&self) -> bool {
        self.f_spmm == self.expected_f_spmm && self.diffusion_spmm == self.expected_diffusion_spmm
    }
}

/// Run `config` once per entry of `schedules`, overriding its rounds and rule.
pub fn run_bench<T: Real>(
    config: &TrainConfig,
    rule: Rule,
    schedules: &[Rounds],
    graph: &SparseGraph<T>,
    x: &DenseMatrix<T>,
    labels: &LabelData,
) -> Result<Vec<BenchRow>> {
    schedules
        .iter()
        .map(|&rounds| {
            let mut cfg = config.clone();
            cfg.schedule.rounds = rounds;
            cfg.schedule.rule = rule;
            let k = rounds.resolve(cfg.schedule.epochs);
            memory::reset_peak();
            let result = run_altopt(&cfg, graph, x, labels)?;
            let peak_memory = memory::peak();
            Ok(BenchRow {
                rounds,
                k,
                layers: cfg.hyper.layers,
                rule,
                f_spmm: result.counters.f_spmm,
                expected_f_spmm: (k * cfg.hyper.layers) as u64 * rule.spmm_per_step(),
                diffusion_spmm: result.counters.diffusion_spmm,
                expected_diffusion_spmm: cfg.hyper.diffusion_layers as u64,
                peak_memory,
                wall_time_secs: result.wall_time_secs,
                val_accuracy: result.best_val_accuracy,
                test_accuracy: result.test_accuracy_at_best_val,
            })
        })
        .collect()
}

pub fn render_bench(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:>6} {:>5} {:>3} {:<8} {:>16} {:>14} {:>6} {:>9} {:>7} {:>7}  peak memory (estimate)\n",
        "rounds", "k", "K", "rule", "F-SpMM/expected", "X-SpMM/exp.", "exact", "secs", "val %", "test %"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>6} {:>5} {:>3} {:<8} {:>16} {:>14} {:>6} {:>9.3} {:>7.2} {:>7.2}  {}\n",
            r.rounds.to_string(),
            r.k,
            r.layers,
            r.rule.to_string(),
            format!("{}/{}", r.f_spmm, r.expected_f_spmm),
            format!("{}/{}", r.diffusion_spmm, r.expected_diffusion_spmm),
            if r.counters_exact() { "yes" } else { "NO" },
            r.wall_time_secs,
            100.0 * r.val_accuracy,
            100.0 * r.test_accuracy,
            r.peak_memory
        ));
    }
    out
}
