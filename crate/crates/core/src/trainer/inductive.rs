use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::altopt::{mlp_view, pretrain, propagation_params};
use super::config::TrainConfig;
use super::{check_inputs, layer_dims, predict, with_context, LabelData, Method, RoundRecord};
use super::{RunCounters, RunResult};
use crate::counters;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::neural::MlpModel;
use crate::propagation::{propagate_round, Rule};
use crate::pseudo_label::softmax_temperature;
use crate::scalar::Real;

/// Inductive protocol. Training sees only the subgraph induced by
/// `train_nodes` (a superset of the labeled nodes): the MLP is fitted for
/// `pretrain_epochs + epochs` epochs on the raw features of its labeled rows.
/// Inference runs one F round of `layers` steps on the full graph with
/// `MLP(X)` and `Y` fixed. Features are never diffused, so training and
/// inference inputs share one distribution.
pub fn run_inductive<T: Real>(
    config: &TrainConfig,
    full_graph: &SparseGraph<T>,
    train_nodes: &[usize],
    x: &DenseMatrix<T>,
    labels: &LabelData,
) -> Result<RunResult> {
    config.validate()?;
    check_inputs("run_inductive", full_graph.n(), x, labels)?;
    let start = Instant::now();
    let reads_before = labels.test_reads();
    let (out, total) = counters::scoped(|| infer(config, full_graph, train_nodes, x, labels));
    let mut res = out?;
    res.counters.total = total;
    res.test_reads_during_training = labels.test_reads() - reads_before;
    res.test_accuracy_at_best_val = labels.test_accuracy(&res.predictions);
    res.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(res)
}

fn infer<T: Real>(
    config: &TrainConfig,
    full_graph: &SparseGraph<T>,
    train_nodes: &[usize],
    x: &DenseMatrix<T>,
    labels: &LabelData,
) -> Result<RunResult> {
    let (h, sched, opt) = (&config.hyper, &config.schedule, &config.opt);
    let ctx = |e| with_context(e, opt.lr, h.tau);
    // The raw-feature MLP never reads training edges; only the remap is used.
    let (_, remap) = full_graph.induce_subgraph(train_nodes)?;
    if let Some(&i) = labels.train().iter().find(|&&i| remap.old_to_new[i].is_none()) {
        return Err(Error::Input(format!("labeled node {i} is not among the training nodes")));
    }
    let sub_labels = labels.restrict(&remap.new_to_old, &remap.old_to_new);
    let x_sub = x.select_rows(&remap.new_to_old);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::new(&layer_dims(x.cols(), opt, labels.classes()), opt.dropout, &mut rng)?;
    let mut loss = pretrain(&mut model, &x_sub, &sub_labels, sched.pretrain_epochs, opt, &mut rng).map_err(ctx)?;
    if let Some(l) = pretrain(&mut model, &x_sub, &sub_labels, sched.epochs, opt, &mut rng).map_err(ctx)? {
        loss = Some(l);
    }

    let mlp_out = mlp_view(model.forward_eval(x)?, sched.rule, opt.loss);
    let y: DenseMatrix<T> = labels.one_hot_train();
    let mask = labels.labeled_mask();
    let weight_diag = if sched.rule == Rule::Unified {
        mask.iter().map(|&l| if l { T::one() } else { T::zero() }).collect()
    } else {
        Vec::new()
    };
    let params = propagation_params::<T>(config);
    let (f, snap_f) = counters::scoped(|| propagate_round(&y, full_graph, &mlp_out, &y, &mask, &weight_diag, &params));
    let f = softmax_temperature(&f.map_err(ctx)?, T::lit(h.tau))?;
    let predictions = predict(&f);
    let val = labels.val_accuracy(&predictions);
    Ok(RunResult {
        method: Method::Inductive,
        best_val_accuracy: val,
        test_accuracy_at_best_val: f64::NAN,
        best_round: 0,
        rounds: 1,
        mlp_epochs: sched.epochs,
        history: vec![RoundRecord {
            round: 0,
            epochs: sched.epochs,
            train_loss: loss,
            val_accuracy: val,
            selected: 0,
        }],
        counters: RunCounters {
            f_spmm: snap_f.spmm_calls,
            diffusion_spmm: 0,
            total: Default::default(),
        },
        test_reads_during_training: 0,
        wall_time_secs: 0.0,
        predictions,
        chosen: Default::default(),
    })
}
