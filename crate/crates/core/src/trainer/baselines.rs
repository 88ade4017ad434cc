use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::altopt::diffuse;
use super::config::TrainConfig;
use super::{check_inputs, fit_epochs, layer_dims, predict, with_context, Batch, LabelData, Method, RoundRecord};
use super::{RunCounters, RunResult};
use crate::counters;
use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::graph::SparseGraph;
use crate::neural::MlpModel;
use crate::propagation::{label_propagation, masked_label_propagation};
use crate::scalar::Real;

/// Restart probabilities tried by the label-propagation baseline.
pub const LP_ALPHA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
/// Step counts tried by the label-propagation baseline.
pub const LP_LAYER_GRID: [usize; 2] = [10, 30];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// MLP on raw features, labeled nodes only.
    MlpOnly,
    /// `P <- (1-α) Ã P + α Y`, with `(α, K)` tuned on validation accuracy.
    LpOnly,
    /// MLP on diffused features, labeled nodes only.
    DiffusedMlp,
    /// Label propagation that clamps labeled rows toward `Y` with weight
    /// `lambda2` for `layers` steps; the feature-free limit of the F update.
    MaskedLp,
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mlp" | "mlp_only" => Ok(BaselineKind::MlpOnly),
            "lp" | "lp_only" => Ok(BaselineKind::LpOnly),
            "diffused_mlp" | "sgc" => Ok(BaselineKind::DiffusedMlp),
            "masked_lp" => Ok(BaselineKind::MaskedLp),
            other => Err(format!("unknown baseline `{other}`")),
        }
    }
}

/// MLP baselines train for `pretrain_epochs + epochs` epochs and keep the
/// epoch with the best validation accuracy.
pub fn run_baseline<T: Real>(
    kind: BaselineKind,
    config: &TrainConfig,
    graph: &SparseGraph<T>,
    x: &DenseMatrix<T>,
    labels: &LabelData,
) -> Result<RunResult> {
    config.validate()?;
    check_inputs("run_baseline", graph.n(), x, labels)?;
    let start = Instant::now();
    let reads_before = labels.test_reads();
    let (out, total) = counters::scoped(|| match kind {
        BaselineKind::MlpOnly => mlp_baseline(config, x.clone(), labels, Method::MlpOnly, 0),
        BaselineKind::DiffusedMlp => {
            let (xd, snap) = counters::scoped(|| diffuse(x, graph, &config.hyper));
            mlp_baseline(config, xd?, labels, Method::DiffusedMlp, snap.spmm_calls)
        }
        BaselineKind::LpOnly => lp_baseline(graph, labels),
        BaselineKind::MaskedLp => masked_lp_baseline(config, graph, labels),
    });
    let mut res = out?;
    res.counters.total = total;
    res.test_reads_during_training = labels.test_reads() - reads_before;
    res.test_accuracy_at_best_val = labels.test_accuracy(&res.predictions);
    res.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(res)
}

fn mlp_baseline<T: Real>(
    config: &TrainConfig,
    x: DenseMatrix<T>,
    labels: &LabelData,
    method: Method,
    diffusion_spmm: u64,
) -> Result<RunResult> {
    let opt = &config.opt;
    let ctx = |e| with_context(e, opt.lr, config.hyper.tau);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::new(&layer_dims(x.cols(), opt, labels.classes()), opt.dropout, &mut rng)?;
    let batch = Batch {
        x: x.select_rows(labels.train()),
        targets: labels.train_targets(),
        weights: vec![T::one(); labels.train().len()],
    };
    let x_val = x.select_rows(labels.val());
    let epochs = config.schedule.pretrain_epochs + config.schedule.epochs;
    let mut history = Vec::with_capacity(epochs);
    let mut best: Option<(f64, usize, MlpModel<T>)> = None;
    for epoch in 0..epochs {
        let loss = fit_epochs(&mut model, &batch, 1, opt, &mut rng).map_err(ctx)?;
        let val = labels.val_accuracy_aligned(&predict(&model.forward_eval(&x_val)?));
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, epoch, model.clone()));
        }
        history.push(RoundRecord {
            round: epoch,
            epochs: epoch + 1,
            train_loss: loss,
            val_accuracy: val,
            selected: 0,
        });
    }
    let (best_val, best_round, best_model) = best.unwrap_or((0.0, 0, model));
    let predictions = predict(&best_model.forward_eval(&x)?);
    let best_val = if history.is_empty() { labels.val_accuracy(&predictions) } else { best_val };
    Ok(RunResult {
        method,
        best_val_accuracy: best_val,
        test_accuracy_at_best_val: f64::NAN,
        best_round,
        rounds: 0,
        mlp_epochs: epochs,
        history,
        counters: RunCounters {
            f_spmm: 0,
            diffusion_spmm,
            total: Default::default(),
        },
        test_reads_during_training: 0,
        wall_time_secs: 0.0,
        predictions,
        chosen: Default::default(),
    })
}

fn lp_baseline<T: Real>(graph: &SparseGraph<T>, labels: &LabelData) -> Result<RunResult> {
    let y: DenseMatrix<T> = labels.one_hot_train();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<usize>, f64, usize)> = None;
    let (res, snap) = counters::scoped(|| -> Result<()> {
        for &alpha in &LP_ALPHA_GRID {
            for &k in &LP_LAYER_GRID {
                let p = label_propagation(&y, graph, T::lit(alpha), k)?;
                let pred = predict(&p);
                let val = labels.val_accuracy(&pred);
                if best.as_ref().is_none_or(|b| val > b.0) {
                    best = Some((val, history.len(), pred, alpha, k));
                }
                history.push(RoundRecord {
                    round: history.len(),
                    epochs: 0,
                    train_loss: None,
                    val_accuracy: val,
                    selected: 0,
                });
            }
        }
        Ok(())
    });
    res?;
    let (best_val, best_round, predictions, alpha, k) = best.expect("non-empty grid");
    Ok(RunResult {
        method: Method::LpOnly,
        best_val_accuracy: best_val,
        test_accuracy_at_best_val: f64::NAN,
        best_round,
        rounds: history.len(),
        mlp_epochs: 0,
        history,
        counters: RunCounters {
            f_spmm: snap.spmm_calls,
            diffusion_spmm: 0,
            total: Default::default(),
        },
        test_reads_during_training: 0,
        wall_time_secs: 0.0,
        predictions,
        chosen: BTreeMap::from([("alpha".to_string(), alpha), ("layers".to_string(), k as f64)]),
    })
}

fn masked_lp_baseline<T: Real>(config: &TrainConfig, graph: &SparseGraph<T>, labels: &LabelData) -> Result<RunResult> {
    let y: DenseMatrix<T> = labels.one_hot_train();
    let mask = labels.labeled_mask();
    let (p, snap) = counters::scoped(|| {
        masked_label_propagation(&y, graph, &mask, T::lit(config.hyper.lambda2), config.hyper.layers)
    });
    let predictions = predict(&p?);
    let val = labels.val_accuracy(&predictions);
    Ok(RunResult {
        method: Method::MaskedLp,
        best_val_accuracy: val,
        test_accuracy_at_best_val: f64::NAN,
        best_round: 0,
        rounds: 1,
        mlp_epochs: 0,
        history: vec![RoundRecord {
            round: 0,
            epochs: 0,
            train_loss: None,
            val_accuracy: val,
            selected: 0,
        }],
        counters: RunCounters {
            f_spmm: snap.spmm_calls,
            diffusion_spmm: 0,
            total: Default::default(),
        },
        test_reads_during_training: 0,
        wall_time_secs: 0.0,
        predictions,
        chosen: Default::default(),
    })
}
