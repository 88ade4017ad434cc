use super::*;
use crate::data::{generate_sbm, Dataset, SbmParams};
use crate::graph::SparseGraph;
use crate::neural::LossKind;
use crate::propagation::{masked_label_propagation, Rule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type D = DenseMatrix<f64>;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// First `per_class` nodes of each class are labeled; the rest alternate
/// between validation and test.
fn task(ds: &Dataset<f64>, per_class: usize) -> LabelData {
    let mut seen = vec![0; ds.classes];
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &l) in ds.labels.iter().enumerate() {
        if seen[l] < per_class {
            seen[l] += 1;
            train.push(i);
        } else if (i / ds.classes) % 2 == 0 {
            val.push(i);
        } else {
            test.push(i);
        }
    }
    LabelData::from_sets(ds.labels.clone(), ds.classes, train, val, test).unwrap()
}

fn sbm(seed: u64, p_in: f64, p_out: f64, noise: f64) -> Dataset<f64> {
    generate_sbm(&SbmParams {
        n: 240,
        classes: 3,
        p_in,
        p_out,
        feature_dim: 12,
        feature_noise: noise,
        seed,
    })
    .unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        hyper: HyperParams {
            per_class: Some(20),
            ..HyperParams::default()
        },
        schedule: Schedule {
            pretrain_epochs: 30,
            epochs: 60,
            rounds: Rounds::Count(5),
            rule: Rule::Mse,
        },
        opt: OptimConfig {
            hidden: vec![16],
            dropout: 0.2,
            ..OptimConfig::default()
        },
        seed: 7,
    }
}

#[test]
fn predict_examples() {
    let f = D::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.25]]).unwrap();
    assert_eq!(predict(&f), vec![1, 0, 0]);
    let two = D::from_rows(&[[0.5, 1.0 / 6.0], [0.5, 1.0 / 6.0]]).unwrap();
    assert_eq!(predict(&two), vec![0, 0]);
}

#[test]
fn pretrain_zero_epochs_is_identity_and_toy_is_separable() {
    let n = 20;
    let x = D::from_fn(n, 2, |i, j| if (i % 2 == 0) == (j == 0) { 1.0 + 0.05 * i as f64 } else { 0.0 });
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let ld = LabelData::from_sets(labels, 2, (0..n).collect(), vec![], vec![]).unwrap();
    let opt = OptimConfig {
        dropout: 0.0,
        ..OptimConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = MlpModel::new(&[2, 8, 2], 0.0, &mut rng).unwrap();
    let before = model.clone();
    assert_eq!(pretrain(&mut model, &x, &ld, 0, &opt, &mut rng).unwrap(), None);
    assert_eq!(model, before);
    pretrain(&mut model, &x, &ld, 100, &opt, &mut rng).unwrap();
    let pred = predict(&model.forward_eval(&x).unwrap());
    assert!(pred.iter().enumerate().all(|(i, &p)| p == i % 2));

    let empty = LabelData::from_sets(vec![0; n], 2, vec![], vec![], vec![]).unwrap();
    assert!(pretrain(&mut model, &x, &empty, 1, &opt, &mut rng).is_err());
}

#[test]
fn lazy_schedule_counts_are_exact() {
    let ds = sbm(0, 0.1, 0.01, 1.0);
    let ld = task(&ds, 5);
    for epochs in [20, 60, 61] {
        let mut c = small_config();
        c.schedule.epochs = epochs;
        let r = run_altopt(&c, &ds.graph, &ds.features, &ld).unwrap();
        assert_eq!(r.rounds, 5);
        assert_eq!(r.mlp_epochs, epochs);
        assert_eq!(r.counters.f_spmm, 50);
        assert_eq!(r.counters.diffusion_spmm, 10);
        assert_eq!(r.counters.total.width(3), 50);
        assert_eq!(r.test_reads_during_training, 0);
    }
    let mut c = small_config();
    c.schedule.rule = Rule::Hetero;
    c.schedule.rounds = Rounds::Full;
    c.schedule.epochs = 12;
    let r = run_altopt(&c, &ds.graph, &ds.features, &ld).unwrap();
    assert_eq!((r.rounds, r.counters.f_spmm), (12, 2 * 12 * 10));
    assert_eq!(r.history.len(), 12);
}

#[test]
fn feature_free_limit_is_masked_label_propagation() {
    let ds = sbm(3, 0.08, 0.02, 1.0);
    let ld = task(&ds, 3);
    let mut c = small_config();
    c.hyper.lambda1 = 0.0;
    c.hyper.lambda2 = 2.0;
    c.hyper.per_class = Some(0);
    c.schedule.pretrain_epochs = 0;
    c.schedule.rounds = Rounds::Count(1);
    let r = run_altopt(&c, &ds.graph, &ds.features, &ld).unwrap();
    let lp = run_baseline(BaselineKind::MaskedLp, &c, &ds.graph, &ds.features, &ld).unwrap();
    assert_eq!(r.predictions, lp.predictions);
    assert_eq!(r.test_accuracy_at_best_val, lp.test_accuracy_at_best_val);

    // The trajectory itself, not only the argmax, matches.
    let y: D = ld.one_hot_train();
    let mask = ld.labeled_mask();
    let zero_mlp = D::zeros(ds.n(), 3);
    let params = crate::propagation::PropagationParams {
        lambda1: 0.0,
        lambda2: 2.0,
        layers: 10,
        rule: Rule::Mse,
    };
    let f = crate::propagation::propagate_round(&y, &ds.graph, &zero_mlp, &y, &mask, &[], &params).unwrap();
    let reference = masked_label_propagation(&y, &ds.graph, &mask, 2.0, 10).unwrap();
    assert!(f.max_abs_diff(&reference).unwrap() < 1e-12);
}

#[test]
fn deterministic_under_seed() {
    let ds = sbm(1, 0.1, 0.02, 1.0);
    let ld = task(&ds, 4);
    let c = small_config();
    let a = run_altopt(&c, &ds.graph, &ds.features, &ld).unwrap();
    let b = run_altopt(&c, &ds.graph, &ds.features, &ld).unwrap();
    assert!(a.same_outcome(&b));
    let mut other = c.clone();
    other.seed = 8;
    let d = run_altopt(&other, &ds.graph, &ds.features, &ld).unwrap();
    assert_ne!(a.history, d.history);
}

#[test]
fn best_round_is_reported() {
    let ds = sbm(2, 0.1, 0.02, 1.5);
    let ld = task(&ds, 4);
    let r = run_altopt(&small_config(), &ds.graph, &ds.features, &ld).unwrap();
    let best = r.history.iter().map(|h| h.val_accuracy).fold(f64::MIN, f64::max);
    assert_eq!(r.best_val_accuracy, best);
    assert_eq!(r.history[r.best_round].val_accuracy, best);
    assert!(r.history[..r.best_round].iter().all(|h| h.val_accuracy < best));
}

#[test]
fn lp_separates_two_clusters() {
    let ds = generate_sbm::<f64>(&SbmParams {
        n: 60,
        classes: 2,
        p_in: 0.5,
        p_out: 0.0,
        feature_dim: 2,
        feature_noise: 1.0,
        seed: 4,
    })
    .unwrap();
    let ld = task(&ds, 1);
    let r = run_baseline(BaselineKind::LpOnly, &small_config(), &ds.graph, &ds.features, &ld).unwrap();
    assert_eq!(r.test_accuracy_at_best_val, 1.0);
    assert_eq!(r.best_val_accuracy, 1.0);
    assert_eq!(r.rounds, LP_ALPHA_GRID.len() * LP_LAYER_GRID.len());
}

#[test]
fn mlp_on_uninformative_features_predicts_one_class() {
    let mut ds = sbm(5, 0.1, 0.05, 0.0);
    ds.features = D::filled(ds.n(), 12, 1.0);
    let ld = task(&ds, 5);
    let r = run_baseline(BaselineKind::MlpOnly, &small_config(), &ds.graph, &ds.features, &ld).unwrap();
    let first = r.predictions[0];
    assert!(r.predictions.iter().all(|&p| p == first));
    // Balanced classes: the constant predictor scores 1/3.
    assert!((r.test_accuracy_at_best_val - 1.0 / 3.0).abs() < 0.02);
}

#[test]
fn homophilous_sbm_ordering() {
    let (mut alt, mut mlp, mut diffused, mut lp) = (vec![], vec![], vec![], vec![]);
    for seed in 0..10 {
        let ds = sbm(100 + seed, 0.06, 0.01, 2.5);
        let ld = task(&ds, 3);
        let mut c = small_config();
        c.seed = seed;
        let acc = |kind| run_baseline(kind, &c, &ds.graph, &ds.features, &ld).unwrap().test_accuracy_at_best_val;
        mlp.push(acc(BaselineKind::MlpOnly));
        diffused.push(acc(BaselineKind::DiffusedMlp));
        lp.push(acc(BaselineKind::LpOnly));
        alt.push(run_altopt(&c, &ds.graph, &ds.features, &ld).unwrap().test_accuracy_at_best_val);
    }
    let (alt, mlp, diffused, lp) = (median(alt), median(mlp), median(diffused), median(lp));
    assert!(diffused >= mlp, "diffused {diffused} < mlp {mlp}");
    assert!(alt >= mlp && alt >= lp, "alt {alt} mlp {mlp} lp {lp}");
}

#[test]
fn inductive_on_all_nodes_matches_transductive() {
    let ds = sbm(6, 0.08, 0.02, 1.5);
    let ld = task(&ds, 4);
    let mut c = small_config();
    c.hyper.per_class = Some(0);
    c.hyper.diffusion_layers = 0;
    c.schedule.rounds = Rounds::Count(1);
    let trans = run_altopt(&c, &ds.graph, &ds.features, &ld).unwrap();
    let all: Vec<usize> = (0..ds.n()).collect();
    let ind = run_inductive(&c, &ds.graph, &all, &ds.features, &ld).unwrap();
    assert_eq!(trans.predictions, ind.predictions);
    assert_eq!(ind.test_reads_during_training, 0);
}

#[test]
fn inductive_without_edges_follows_mlp() {
    let ds = sbm(7, 0.0, 0.0, 1.0);
    assert_eq!(ds.graph.n_edges(), 0);
    let ld = task(&ds, 5);
    let mut c = small_config();
    c.hyper.diffusion_layers = 0;
    let r = run_inductive(&c, &ds.graph, ld.train(), &ds.features, &ld).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut model = MlpModel::new(&[12, 16, 3], c.opt.dropout, &mut rng).unwrap();
    pretrain(&mut model, &ds.features, &ld, 90, &c.opt, &mut rng).unwrap();
    let mlp_pred = predict(&model.forward_eval(&ds.features).unwrap());
    for i in 0..ds.n() {
        let want = if ld.labeled_mask()[i] { ld.train_label(i) } else { mlp_pred[i] };
        assert_eq!(r.predictions[i], want, "node {i}");
    }
}

#[test]
fn inductive_beats_mlp_on_sbm() {
    let (mut ind, mut mlp) = (vec![], vec![]);
    for seed in 0..10 {
        let ds = sbm(200 + seed, 0.06, 0.01, 2.5);
        let ld = task(&ds, 3);
        let mut c = small_config();
        c.seed = seed;
        c.hyper.diffusion_layers = 0;
        ind.push(run_inductive(&c, &ds.graph, ld.train(), &ds.features, &ld).unwrap().test_accuracy_at_best_val);
        mlp.push(run_baseline(BaselineKind::MlpOnly, &c, &ds.graph, &ds.features, &ld).unwrap().test_accuracy_at_best_val);
    }
    assert!(median(ind.clone()) > median(mlp.clone()), "{ind:?} vs {mlp:?}");
}

#[test]
fn unified_and_ce_rules_run() {
    let ds = sbm(8, 0.1, 0.02, 1.0);
    let ld = task(&ds, 4);
    for (rule, loss) in [(Rule::Ce, LossKind::Ce), (Rule::Unified, LossKind::Mse)] {
        let mut c = small_config();
        c.schedule.rule = rule;
        c.opt.loss = loss;
        let r = run_altopt(&c, &ds.graph, &ds.features, &ld).unwrap();
        assert!(r.best_val_accuracy > 0.5, "{rule}: {}", r.best_val_accuracy);
    }
}

#[test]
fn numerical_abort_carries_context() {
    let ds = sbm(9, 0.1, 0.02, 1.0);
    let ld = task(&ds, 4);
    let mut x = ds.features.clone();
    x.set(ld.train()[0], 0, f64::NAN);
    let mut c = small_config();
    c.hyper.diffusion_layers = 0;
    match run_altopt(&c, &ds.graph, &x, &ld) {
        Err(Error::Numerical { lr, tau, .. }) => assert_eq!((lr, tau), (0.01, Some(0.1))),
        other => panic!("expected a numerical abort, got {other:?}"),
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let g = SparseGraph::<f64>::from_edges(&[(0, 1)], 2).unwrap();
    let ld = LabelData::from_sets(vec![0, 1, 0], 2, vec![0], vec![1], vec![2]).unwrap();
    assert!(run_altopt(&small_config(), &g, &D::zeros(2, 3), &ld).is_err());
}


