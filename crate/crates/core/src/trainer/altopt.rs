use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{HyperParams, OptimConfig, TrainConfig};
use super::{check_inputs, fit_epochs, layer_dims, predict, with_context, Batch, LabelData, Method, RoundRecord};
use super::{RunCounters, RunResult};
use crate::counters;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::neural::{softmax_rows, LossKind, MlpModel};
use crate::propagation::{feature_diffusion, propagate_round, PropagationParams, Rule};
use crate::pseudo_label::{select_balanced, softmax_temperature, SelectionResult};
use crate::scalar::Real;

/// `epochs` full-batch Adam epochs on the labeled rows of `x` against their
/// one-hot labels, every node weighted 1.
pub fn pretrain<T: Real, R: Rng + ?Sized>(
    model: &mut MlpModel<T>,
    x: &DenseMatrix<T>,
    labels: &LabelData,
    epochs: usize,
    opt: &OptimConfig,
    rng: &mut R,
) -> Result<Option<f64>> {
    if labels.train().is_empty() {
        return Err(Error::Input("pretrain: no labeled nodes".into()));
    }
    if epochs == 0 {
        return Ok(None);
    }
    let batch = Batch {
        x: x.select_rows(labels.train()),
        targets: labels.train_targets(),
        weights: vec![T::one(); labels.train().len()],
    };
    fit_epochs(model, &batch, epochs, opt, rng)
}

/// `X' = LP(X, α)` with `diffusion_layers` steps; raw features at 0 steps.
pub(crate) fn diffuse<T: Real>(x: &DenseMatrix<T>, g: &SparseGraph<T>, h: &HyperParams) -> Result<DenseMatrix<T>> {
    if h.diffusion_layers == 0 {
        return Ok(x.clone());
    }
    feature_diffusion(x, g, T::lit(h.alpha), h.diffusion_layers)
}

/// MLP outputs in the space the rule expects: probabilities for the
/// cross-entropy rules or a cross-entropy-trained network, raw otherwise.
pub(crate) fn mlp_view<T: Real>(logits: DenseMatrix<T>, rule: Rule, loss: LossKind) -> DenseMatrix<T> {
    if rule.wants_probabilities() || loss == LossKind::Ce {
        softmax_rows(&logits)
    } else {
        logits
    }
}

pub(crate) fn propagation_params<T: Real>(config: &TrainConfig) -> PropagationParams<T> {
    PropagationParams {
        lambda1: T::lit(config.hyper.lambda1),
        lambda2: T::lit(config.hyper.lambda2),
        layers: config.hyper.layers,
        rule: config.schedule.rule,
    }
}

/// Full alternating run. The returned predictions and test accuracy come
/// from the round with the highest validation accuracy (earliest on ties).
pub fn run_altopt<T: Real>(
    config: &TrainConfig,
    graph: &SparseGraph<T>,
    x: &DenseMatrix<T>,
    labels: &LabelData,
) -> Result<RunResult> {
    config.validate()?;
    check_inputs("run_altopt", graph.n(), x, labels)?;
    let start = Instant::now();
    let reads_before = labels.test_reads();
    let (out, total) = counters::scoped(|| alternate(config, graph, x, labels));
    let mut res = out?;
    res.counters.total = total;
    res.test_reads_during_training = labels.test_reads() - reads_before;
    res.test_accuracy_at_best_val = labels.test_accuracy(&res.predictions);
    res.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(res)
}

fn alternate<T: Real>(
    config: &TrainConfig,
    graph: &SparseGraph<T>,
    x: &DenseMatrix<T>,
    labels: &LabelData,
) -> Result<RunResult> {
    let (h, sched, opt) = (&config.hyper, &config.schedule, &config.opt);
    let ctx = |e| with_context(e, opt.lr, h.tau);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = graph.n();
    let c = labels.classes();

    let (xd, diffusion) = counters::scoped(|| diffuse(x, graph, h));
    let xd = xd?;
    let mut model = MlpModel::new(&layer_dims(xd.cols(), opt, c), opt.dropout, &mut rng)?;
    let mut last_loss = pretrain(&mut model, &xd, labels, sched.pretrain_epochs, opt, &mut rng).map_err(ctx)?;

    let y: DenseMatrix<T> = labels.one_hot_train();
    let mask = labels.labeled_mask();
    let params = propagation_params::<T>(config);
    let per_class = h.per_class_for(n);
    let tau = T::lit(h.tau);

    let mut f = y.clone();
    let mut selection = SelectionResult {
        selected: Vec::new(),
        weights: Vec::new(),
        per_class_counts: vec![0; c],
    };
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    let mut f_spmm = 0;
    let mut epochs_done = 0;
    for (round, &block) in sched.block_epochs().iter().enumerate() {
        let mut rows = labels.train().to_vec();
        rows.extend(&selection.selected);
        let mut weights = vec![T::one(); labels.train().len()];
        weights.extend(&selection.weights);
        let batch = Batch {
            x: xd.select_rows(&rows),
            targets: f.select_rows(&rows),
            weights,
        };
        if let Some(l) = fit_epochs(&mut model, &batch, block, opt, &mut rng).map_err(ctx)? {
            last_loss = Some(l);
        }
        epochs_done += block;

        let mlp_out = mlp_view(model.forward_eval(&xd)?, sched.rule, opt.loss);
        let weight_diag = if sched.rule == Rule::Unified {
            let mut w = vec![T::zero(); n];
            for &i in labels.train() {
                w[i] = T::one();
            }
            for (&i, &wi) in selection.selected.iter().zip(&selection.weights) {
                w[i] = wi;
            }
            w
        } else {
            Vec::new()
        };
        let (next, snap) = counters::scoped(|| propagate_round(&f, graph, &mlp_out, &y, &mask, &weight_diag, &params));
        f_spmm += snap.spmm_calls;
        f = softmax_temperature(&next.map_err(ctx)?, tau)?;
        selection = select_balanced(&f, &mask, per_class)?;

        let pred = predict(&f);
        let val = labels.val_accuracy(&pred);
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, round, pred));
        }
        history.push(RoundRecord {
            round,
            epochs: epochs_done,
            train_loss: last_loss,
            val_accuracy: val,
            selected: selection.len(),
        });
    }
    // Without rounds the pretrained network is the only predictor.
    let (best_val, best_round, predictions) = match best {
        Some(b) => b,
        None => {
            let pred = predict(&model.forward_eval(&xd)?);
            (labels.val_accuracy(&pred), 0, pred)
        }
    };
    Ok(RunResult {
        method: Method::AltOpt,
        best_val_accuracy: best_val,
        test_accuracy_at_best_val: f64::NAN,
        best_round,
        rounds: history.len(),
        mlp_epochs: epochs_done,
        history,
        counters: RunCounters {
            f_spmm,
            diffusion_spmm: diffusion.spmm_calls,
            total: Default::default(),
        },
        test_reads_during_training: 0,
        wall_time_secs: 0.0,
        predictions,
        chosen: Default::default(),
    })
}
