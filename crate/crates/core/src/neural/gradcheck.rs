use rand_chacha::ChaCha8Rng;

use super::mlp::{LossKind, MlpModel};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest parameter count accepted by [`finite_diff_check`].
pub const MAX_CHECK_PARAMS: usize = 10_000;

/// Max over parameters of `|g_a - g_fd| / max(|g_a| + |g_fd|, 1e-8)` where
/// `g_fd` is the central difference with step `epsilon`. Dropout is off.
pub fn finite_diff_check<T: Real>(
    model: &MlpModel<T>,
    x: &DenseMatrix<T>,
    targets: &DenseMatrix<T>,
    node_weights: &[T],
    kind: LossKind,
    epsilon: f64,
) -> Result<f64> {
    if model.n_params() > MAX_CHECK_PARAMS {
        return Err(Error::contract(
            "finite_diff_check",
            format!("{} parameters exceeds {MAX_CHECK_PARAMS}", model.n_params()),
        ));
    }
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(Error::contract("finite_diff_check", format!("epsilon {epsilon} outside [1e-6, 1e-4]")));
    }
    let (_, analytic) = model.loss_and_grad(x, targets, node_weights, kind, None::<&mut ChaCha8Rng>)?;
    let analytic: Vec<f64> = analytic.iter().map(|g| g.to_f64_lossless()).collect();
    let mut probe = model.clone();
    let eps = T::lit(epsilon);
    let mut worst = 0.0f64;
    for (k, &ga) in analytic.iter().enumerate() {
        let original = *probe.params().iter().nth(k).expect("index within parameter count");
        let mut eval_at = |v: T| -> Result<f64> {
            *probe.params_mut().iter_mut().nth(k).expect("index within parameter count") = v;
            Ok(probe.loss(x, targets, node_weights, kind)?.to_f64_lossless())
        };
        let plus = eval_at(original + eps)?;
        let minus = eval_at(original - eps)?;
        eval_at(original)?;
        let fd = (plus - minus) / (2.0 * epsilon);
        let rel = (ga - fd).abs() / (ga.abs() + fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::mlp::softmax_rows;
    use rand::{Rng, SeedableRng};

    fn instance(seed: u64, zero_input: bool) -> (MlpModel<f64>, DenseMatrix<f64>, DenseMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = MlpModel::new(&[5, 7, 3], 0.0, &mut rng).unwrap();
        // Random biases keep pre-activations off the ReLU kink at zero input.
        for b in model.params_mut().biases.iter_mut().flatten() {
            *b = rng.random_range(-0.5..0.5);
        }
        let x = if zero_input {
            DenseMatrix::zeros(6, 5)
        } else {
            DenseMatrix::from_fn(6, 5, |_, _| rng.random_range(-1.0..1.0))
        };
        let raw = DenseMatrix::from_fn(6, 3, |_, _| rng.random_range(-2.0..2.0));
        let w = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
        (model, x, softmax_rows(&raw), w)
    }

    #[test]
    fn both_losses_pass() {
        for seed in 0..3 {
            for kind in [LossKind::Mse, LossKind::Ce] {
                let (m, x, t, w) = instance(seed, false);
                let err = finite_diff_check(&m, &x, &t, &w, kind, 1e-5).unwrap();
                assert!(err <= 1e-5, "seed {seed} {kind:?}: {err}");
            }
        }
    }

    #[test]
    fn zero_input_is_tight() {
        let (m, x, t, w) = instance(4, true);
        let err = finite_diff_check(&m, &x, &t, &w, LossKind::Mse, 1e-5).unwrap();
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn rejects_out_of_range_epsilon() {
        let (m, x, t, w) = instance(0, false);
        assert!(finite_diff_check(&m, &x, &t, &w, LossKind::Mse, 1e-2).is_err());
    }
}
