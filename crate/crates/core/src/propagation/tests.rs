use proptest::prelude::*;

use super::*;
use crate::counters;
use crate::neural::softmax_rows;

type D = DenseMatrix<f64>;
type G = SparseGraph<f64>;

fn edge() -> G {
    G::from_edges(&[(0, 1)], 2).unwrap()
}

fn worked_inputs() -> (D, D, Vec<bool>) {
    let y = D::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
    let m = D::filled(2, 2, 0.5);
    (y, m, vec![true, false])
}

#[test]
fn mse_worked_example() {
    let (y, m, lab) = worked_inputs();
    let f = update_f_mse(&y, &edge(), &m, &y, &lab, 1.0, 1.0).unwrap();
    let want = D::from_rows(&[[0.5, 1.0 / 6.0], [0.5, 1.0 / 6.0]]).unwrap();
    assert!(f.max_abs_diff(&want).unwrap() < 1e-15);
    assert_eq!(f.argmax_rows(), vec![0, 0]);
}

#[test]
fn mse_sqrt_degree_fixed_point() {
    let g = G::from_edges(&[(0, 1), (1, 2), (1, 3)], 4).unwrap();
    let f = D::from_fn(4, 2, |i, j| g.degrees()[i].sqrt() * (j as f64 + 1.0));
    let out = update_f_mse(&f, &g, &D::zeros(4, 2), &D::zeros(4, 2), &[false; 4], 0.0, 0.0).unwrap();
    assert!(out.max_abs_diff(&f).unwrap() < 1e-14);
}

#[test]
fn ce_worked_example() {
    let (y, m, lab) = worked_inputs();
    let f = update_f_ce(&y, &edge(), &m, &y, &lab, 1.0, 1.0).unwrap();
    let l = 0.25 * 0.5f64.ln();
    assert!((f.get(0, 0) - (0.5 + l)).abs() < 1e-15);
    assert!((f.get(0, 1) - l).abs() < 1e-15);
    assert!((f.get(0, 1) + 0.1732868).abs() < 1e-7);
}

#[test]
fn ce_without_feature_term_is_lp_step() {
    let g = G::from_edges(&[(0, 1), (1, 2), (2, 3)], 4).unwrap();
    let y = D::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 1.0]]).unwrap();
    let f = D::from_fn(4, 2, |i, j| (i + j) as f64 * 0.1);
    let m = D::filled(4, 2, 0.5);
    let lab = [true, false, false, true];
    let ce = update_f_ce(&f, &g, &m, &y, &lab, 0.0, 3.0).unwrap();
    let mse = update_f_mse(&f, &g, &m, &y, &lab, 0.0, 3.0).unwrap();
    assert!(ce.max_abs_diff(&mse).unwrap() < 1e-15);

    // A uniform MLP shifts every class equally, so argmax matches the λ1 = 0 rule.
    let shifted = update_f_ce(&f, &g, &m, &y, &lab, 2.0, 3.0).unwrap();
    assert_eq!(shifted.argmax_rows(), mse.argmax_rows());
}

#[test]
fn ce_rejects_non_stochastic_rows() {
    let (y, _, lab) = worked_inputs();
    let m = D::filled(2, 2, 0.6);
    assert!(matches!(update_f_ce(&y, &edge(), &m, &y, &lab, 1.0, 1.0), Err(Error::Contract { .. })));
}

#[test]
fn hetero_on_edgeless_graph() {
    let g = G::from_edges(&[], 3).unwrap();
    let f = D::from_fn(3, 2, |i, j| i as f64 - j as f64 + 0.5);
    let m = D::from_fn(3, 2, |i, j| (i * j) as f64 * 0.3);
    let y = D::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
    let lab = [true, false, false];
    let (l1, l2) = (0.7, 2.0);
    let out = update_f_hetero(&f, &g, &m, &y, &lab, l1, l2).unwrap();
    for i in 0..3 {
        let lab_w = if lab[i] { l2 } else { 0.0 };
        for j in 0..2 {
            let v = f.get(i, j);
            let want = v - (l1 * (v - m.get(i, j)) + v + lab_w * (v - y.get(i, j))) / (l1 + l2 + 4.0);
            assert!((out.get(i, j) - want).abs() < 1e-15);
        }
    }
}

#[test]
fn hetero_null_space_is_fixed() {
    let g = G::from_edges(&[(0, 1), (1, 2), (3, 4)], 5).unwrap();
    let f = D::from_fn(5, 1, |i, _| g.degrees()[i].sqrt() * if i < 3 { 1.0 } else { -2.0 });
    let out = update_f_hetero(&f, &g, &D::zeros(5, 1), &D::zeros(5, 1), &[false; 5], 0.0, 0.0).unwrap();
    assert!(out.max_abs_diff(&f).unwrap() < 1e-14);
}

#[test]
fn spmm_accounting_per_rule() {
    let g = G::from_edges(&[(0, 1), (1, 2)], 3).unwrap();
    let y = D::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]).unwrap();
    let p = D::filled(3, 2, 0.5);
    let lab = [true, false, true];
    let (_, mse) = counters::scoped(|| update_f_mse(&y, &g, &p, &y, &lab, 1.0, 1.0).unwrap());
    let (_, ce) = counters::scoped(|| update_f_ce(&y, &g, &p, &y, &lab, 1.0, 1.0).unwrap());
    let (_, het) = counters::scoped(|| update_f_hetero(&y, &g, &p, &y, &lab, 1.0, 1.0).unwrap());
    assert_eq!((mse.spmm_calls, ce.spmm_calls, het.spmm_calls), (1, 1, 2));
}

#[test]
fn unified_zero_gradient_and_pure_smoothing() {
    // Two isolated nodes make L̃ = I, so F must be zero for L̃F = 0; then
    // S(F) is uniform and equals both targets.
    let g = G::from_edges(&[], 2).unwrap();
    let f = D::zeros(2, 2);
    let u = D::filled(2, 2, 0.5);
    let out = update_f_unified(&f, &g, &u, &u, &[true, true], &[1.0, 1.0], 1.0, 1.0, 0.1).unwrap();
    assert_eq!(out, f);

    let g = G::from_edges(&[(0, 1), (1, 2)], 3).unwrap();
    let f = D::from_fn(3, 2, |i, j| (i * 2 + j) as f64 * 0.3);
    let eta = 0.05;
    let out = update_f_unified(&f, &g, &D::filled(3, 2, 0.5), &D::zeros(3, 2), &[false; 3], &[0.0; 3], 0.0, 0.0, eta)
        .unwrap();
    let mut want = f.clone();
    want.axpy(-2.0 * eta, &g.laplacian_apply(&f).unwrap()).unwrap();
    assert!(out.max_abs_diff(&want).unwrap() < 1e-15);
    assert!(update_f_unified(&f, &g, &D::filled(3, 2, 0.5), &D::zeros(3, 2), &[false; 3], &[0.0; 3], 0.0, 0.0, 0.0)
        .is_err());
}

#[test]
fn masked_reference_matches_rule_without_features() {
    let g = G::from_edges(&[(0, 1), (1, 2), (2, 3), (3, 0), (1, 3)], 4).unwrap();
    let y = D::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
    let lab = [true, false, true, false];
    let params = PropagationParams {
        lambda1: 0.0,
        lambda2: 4.0,
        layers: 7,
        rule: Rule::Mse,
    };
    let via_rule = propagate_round(&y, &g, &D::zeros(4, 2), &y, &lab, &[0.0; 4], &params).unwrap();
    let reference = masked_label_propagation(&y, &g, &lab, 4.0, 7).unwrap();
    assert!(via_rule.max_abs_diff(&reference).unwrap() < 1e-15);
}

/// Random instance: graph, F, MLP output (raw and softmaxed), Y, mask.
#[derive(Debug, Clone)]
struct Instance {
    g: G,
    f: D,
    m: D,
    probs: D,
    y: D,
    lab: Vec<bool>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..12, 1usize..4).prop_flat_map(|(n, c)| {
        (
            prop::collection::vec((0..n, 0..n), 0..3 * n),
            prop::collection::vec(-3.0f64..3.0, n * c),
            prop::collection::vec(-3.0f64..3.0, n * c),
            prop::collection::vec(prop::option::of(0..c), n),
        )
            .prop_map(move |(e, f, m, labels)| {
                let m = D::from_vec(n, c, m).unwrap();
                let mut y = D::zeros(n, c);
                for (i, l) in labels.iter().enumerate() {
                    if let Some(k) = l {
                        y.set(i, *k, 1.0);
                    }
                }
                Instance {
                    g: G::from_edges(&e, n).unwrap(),
                    f: D::from_vec(n, c, f).unwrap(),
                    probs: softmax_rows(&m),
                    m,
                    y,
                    lab: labels.iter().map(Option::is_some).collect(),
                }
            })
    })
}

fn permuted(inst: &Instance, perm: &[usize]) -> Instance {
    let n = inst.g.n();
    let move_rows = |d: &D| {
        let mut out = D::zeros(n, d.cols());
        for i in 0..n {
            out.row_mut(perm[i]).copy_from_slice(d.row(i));
        }
        out
    };
    let mut lab = vec![false; n];
    for i in 0..n {
        lab[perm[i]] = inst.lab[i];
    }
    Instance {
        g: inst.g.permute(perm).unwrap(),
        f: move_rows(&inst.f),
        m: move_rows(&inst.m),
        probs: move_rows(&inst.probs),
        y: move_rows(&inst.y),
        lab,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn squared_error_rules_descend(inst in instance(), l1 in 0.0f64..10.0, l2 in 0.0f64..10.0) {
        let Instance { g, f, m, y, lab, .. } = &inst;
        let before = objective_mse(f, g, m, y, lab, l1, l2).unwrap();
        let next = update_f_mse(f, g, m, y, lab, l1, l2).unwrap();
        let after = objective_mse(&next, g, m, y, lab, l1, l2).unwrap();
        prop_assert!(after <= before + 1e-9 * before.abs(), "mse {before} -> {after}");

        let before = objective_hetero(f, g, m, y, lab, l1, l2).unwrap();
        let next = update_f_hetero(f, g, m, y, lab, l1, l2).unwrap();
        let after = objective_hetero(&next, g, m, y, lab, l1, l2).unwrap();
        prop_assert!(after <= before + 1e-9 * before.abs(), "hetero {before} -> {after}");
    }

    #[test]
    fn unified_gradient_matches_finite_differences(inst in instance(), l1 in 0.0f64..5.0, l2 in 0.0f64..5.0) {
        let Instance { g, f, probs, y, lab, .. } = &inst;
        let n = g.n();
        let w: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let eta = 1.0;
        let step = update_f_unified(f, g, probs, y, lab, &w, l1, l2, eta).unwrap();
        let analytic = f.sub(&step).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for idx in 0..f.as_slice().len() {
            let mut plus = f.clone();
            plus.as_mut_slice()[idx] += h;
            let mut minus = f.clone();
            minus.as_mut_slice()[idx] -= h;
            let fd = (objective_unified(&plus, g, probs, y, lab, &w, l1, l2).unwrap()
                - objective_unified(&minus, g, probs, y, lab, &w, l1, l2).unwrap())
                / (2.0 * h);
            let ga = analytic.as_slice()[idx];
            worst = worst.max((ga - fd).abs() / (ga.abs() + fd.abs()).max(1e-8));
        }
        prop_assert!(worst <= 1e-5, "relative gradient error {worst}");
    }

    #[test]
    fn labeled_rows_anchor_to_labels(inst in instance()) {
        let Instance { g, f, m, y, lab, .. } = &inst;
        let next = update_f_mse(f, g, m, y, lab, 1.0, 1e6).unwrap();
        for i in (0..g.n()).filter(|&i| lab[i]) {
            for (a, b) in next.row(i).iter().zip(y.row(i)) {
                prop_assert!((a - b).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn unmasked_form_without_features_is_one_lp_step(inst in instance(), l2 in 0.01f64..20.0) {
        let Instance { g, y, .. } = &inst;
        let step = update_f_mse_unmasked(y, g, &D::zeros(g.n(), y.cols()), y, 0.0, l2).unwrap();
        let alpha = l2 / (l2 + 1.0);
        let lp = label_propagation(y, g, alpha, 1).unwrap();
        prop_assert!(step.max_abs_diff(&lp).unwrap() <= 1e-12);
    }

    #[test]
    fn rules_are_permutation_equivariant(inst in instance(), seed in any::<u64>()) {
        let n = inst.g.n();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let p = permuted(&inst, &perm);
        let w = vec![0.5; n];
        let run = |x: &Instance, rule: Rule| {
            let mlp = if rule.wants_probabilities() { &x.probs } else { &x.m };
            let params = PropagationParams { lambda1: 0.8, lambda2: 2.5, layers: 3, rule };
            propagate_round(&x.f, &x.g, mlp, &x.y, &x.lab, &w, &params).unwrap()
        };
        for rule in [Rule::Mse, Rule::Ce, Rule::Hetero, Rule::Unified] {
            let a = run(&inst, rule);
            let b = run(&p, rule);
            for i in 0..n {
                for (u, v) in a.row(i).iter().zip(b.row(perm[i])) {
                    prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()), "{rule}");
                }
            }
        }
    }
}
