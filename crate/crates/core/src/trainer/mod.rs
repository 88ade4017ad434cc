//! Alternating training: MLP blocks on weighted pseudo labels interleaved
//! with a small number of F propagation rounds, plus the baselines and the
//! inductive protocol built from the same pieces.

mod altopt;
mod baselines;
mod config;
mod inductive;
mod labels;

pub use altopt::{pretrain, run_altopt};
pub use baselines::{run_baseline, BaselineKind, LP_ALPHA_GRID, LP_LAYER_GRID};
pub use config::{HyperParams, OptimConfig, Rounds, Schedule, TrainConfig, LARGE_GRAPH_NODES};
pub use inductive::run_inductive;
pub use labels::LabelData;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::counters::CounterSnapshot;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::neural::MlpModel;
use crate::scalar::Real;

/// Per-node argmax with the lowest index winning ties.
pub fn predict<T: Real>(f: &DenseMatrix<T>) -> Vec<usize> {
    f.argmax_rows()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AltOpt,
    MlpOnly,
    LpOnly,
    DiffusedMlp,
    MaskedLp,
    Inductive,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::AltOpt => "alt_opt",
            Method::MlpOnly => "mlp_only",
            Method::LpOnly => "lp_only",
            Method::DiffusedMlp => "diffused_mlp",
            Method::MaskedLp => "masked_lp",
            Method::Inductive => "inductive",
        })
    }
}

/// One F round (or one epoch for MLP baselines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// MLP epochs completed after pretraining.
    pub epochs: usize,
    /// Loss of the last MLP step before this record; `None` if no step ran.
    pub train_loss: Option<f64>,
    pub val_accuracy: f64,
    /// Pseudo-labeled nodes chosen at the end of this round.
    pub selected: usize,
}

/// SpMM calls split by purpose.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    /// Calls issued by F propagation rounds (or label propagation).
    pub f_spmm: u64,
    /// Calls issued while diffusing features.
    pub diffusion_spmm: u64,
    /// Every call during the run, tagged by dense operand width.
    pub total: CounterSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub best_val_accuracy: f64,
    pub test_accuracy_at_best_val: f64,
    /// Index into `history` of the selected round.
    pub best_round: usize,
    pub rounds: usize,
    pub mlp_epochs: usize,
    pub history: Vec<RoundRecord>,
    pub counters: RunCounters,
    /// Test-accuracy queries issued before the final evaluation.
    pub test_reads_during_training: usize,
    pub wall_time_secs: f64,
    /// Node-indexed predictions at the selected round.
    #[serde(skip)]
    pub predictions: Vec<usize>,
    /// Free-form choices made inside the run, e.g. tuned LP coefficients.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub chosen: BTreeMap<String, f64>,
}

impl RunResult {
    /// Equality of everything except wall time.
    pub fn same_outcome(&self, other: &RunResult) -> bool {
        let mut a = self.clone();
        a.wall_time_secs = other.wall_time_secs;
        a == *other
    }
}

pub(crate) fn with_context(e: Error, lr: f64, tau: f64) -> Error {
    match e {
        Error::Numerical { context, msg, .. } => Error::Numerical {
            context,
            msg,
            lr,
            tau: Some(tau),
        },
        other => other,
    }
}

/// Weighted training rows for one MLP block.
pub(crate) struct Batch<T> {
    pub x: DenseMatrix<T>,
    pub targets: DenseMatrix<T>,
    pub weights: Vec<T>,
}

/// `epochs` Adam epochs over `batch`, shuffled mini-batches when
/// `opt.batch_size` is smaller than the batch. Returns the last step's loss.
pub(crate) fn fit_epochs<T: Real, R: Rng + ?Sized>(
    model: &mut MlpModel<T>,
    batch: &Batch<T>,
    epochs: usize,
    opt: &config::OptimConfig,
    rng: &mut R,
) -> Result<Option<f64>> {
    let rows = batch.x.rows();
    let mut last = None;
    match opt.batch_size {
        Some(bs) if bs < rows => {
            let mut order: Vec<usize> = (0..rows).collect();
            for _ in 0..epochs {
                order.shuffle(rng);
                for chunk in order.chunks(bs) {
                    let x = batch.x.select_rows(chunk);
                    let t = batch.targets.select_rows(chunk);
                    let w: Vec<T> = chunk.iter().map(|&r| batch.weights[r]).collect();
                    let loss = model.train_step(&x, &t, &w, opt.loss, opt.lr, opt.weight_decay, rng)?;
                    last = Some(loss.to_f64_lossless());
                }
            }
        }
        _ => {
            for _ in 0..epochs {
                let loss =
                    model.train_step(&batch.x, &batch.targets, &batch.weights, opt.loss, opt.lr, opt.weight_decay, rng)?;
                last = Some(loss.to_f64_lossless());
            }
        }
    }
    Ok(last)
}

/// `[d, hidden.., c]`.
pub(crate) fn layer_dims(d: usize, opt: &config::OptimConfig, c: usize) -> Vec<usize> {
    let mut dims = vec![d];
    dims.extend(&opt.hidden);
    dims.push(c);
    dims
}

pub(crate) fn check_inputs<T: Real>(
    op: &'static str,
    n_graph: usize,
    x: &DenseMatrix<T>,
    labels: &LabelData,
) -> Result<()> {
    if x.rows() != n_graph || labels.n() != n_graph {
        return Err(Error::shape(
            op,
            format!("{n_graph} feature rows and labels"),
            format!("{} feature rows, {} labels", x.rows(), labels.n()),
        ));
    }
    if labels.train().is_empty() {
        return Err(Error::Input(format!("{op}: no labeled nodes")));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
