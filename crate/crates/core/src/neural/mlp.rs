use rand::Rng;

use crate::dense::{gemm, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Per-row squared L2 distance between raw outputs and targets.
    #[default]
    Mse,
    /// Cross-entropy between soft targets and the softmax of the outputs.
    Ce,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "ce" => Ok(LossKind::Ce),
            other => Err(format!("unknown loss `{other}` (expected mse or ce)")),
        }
    }
}

/// Per-tensor gradients (or Adam moments) shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub weights: Vec<DenseMatrix<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Real> ParamSet<T> {
    pub(crate) fn zeros_like(dims: &[usize]) -> Self {
        ParamSet {
            weights: dims.windows(2).map(|w| DenseMatrix::zeros(w[0], w[1])).collect(),
            biases: dims[1..].iter().map(|&c| vec![T::zero(); c]).collect(),
        }
    }

    /// Flat view over every scalar, weights first then biases, layer order.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.weights
            .iter()
            .flat_map(|w| w.as_slice().iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights
            .iter_mut()
            .flat_map(|w| w.as_mut_slice().iter_mut())
            .chain(self.biases.iter_mut().flat_map(|b| b.iter_mut()))
    }
}

/// First and second Adam moments plus the shared timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub first: ParamSet<T>,
    pub second: ParamSet<T>,
}

/// Fully connected ReLU network. Layer `l` maps `dims[l]` to `dims[l + 1]`;
/// the final layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    dims: Vec<usize>,
    params: ParamSet<T>,
    dropout: f64,
    adam: AdamState<T>,
}

/// Whether a forward pass applies dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Activations retained for backpropagation.
struct Tape<T> {
    /// Input to each layer after dropout.
    inputs: Vec<DenseMatrix<T>>,
    /// Dropout keep flag per element of each layer input; `None` when
    /// inactive or not needed.
    masks: Vec<Option<Vec<bool>>>,
    /// Pre-activation of each layer; the last one is the network output.
    pre: Vec<DenseMatrix<T>>,
}

impl<T: Real> MlpModel<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], dropout: f64, rng: &mut R) -> Result<Self> {
        validate_dims(dims)?;
        let mut params = ParamSet::zeros_like(dims);
        for w in &mut params.weights {
            let limit = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            for v in w.as_mut_slice() {
                *v = T::lit(rng.random_range(-limit..=limit));
            }
        }
        Self::from_params(dims, params, dropout)
    }

    pub fn from_params(dims: &[usize], params: ParamSet<T>, dropout: f64) -> Result<Self> {
        validate_dims(dims)?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::contract("MlpModel", format!("dropout {dropout} outside [0, 1)")));
        }
        let want = ParamSet::<T>::zeros_like(dims);
        let shapes_ok = params.weights.len() == want.weights.len()
            && params.weights.iter().zip(&want.weights).all(|(a, b)| a.shape() == b.shape())
            && params.biases.iter().map(Vec::len).eq(want.biases.iter().map(Vec::len));
        if !shapes_ok {
            return Err(Error::shape("MlpModel::from_params", format!("layer dims {dims:?}"), "mismatched tensors"));
        }
        Ok(MlpModel {
            dims: dims.to_vec(),
            params,
            dropout,
            adam: AdamState {
                step: 0,
                first: want.clone(),
                second: want,
            },
        })
    }

    pub(crate) fn from_parts(dims: Vec<usize>, params: ParamSet<T>, dropout: f64, adam: AdamState<T>) -> Self {
        MlpModel {
            dims,
            params,
            dropout,
            adam,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().count()
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn check_input(&self, x: &DenseMatrix<T>, op: &'static str) -> Result<()> {
        if x.cols() != self.dims[0] {
            return Err(Error::shape(op, format!("{} input columns", self.dims[0]), format!("{}", x.cols())));
        }
        Ok(())
    }

    /// Network output (pre-softmax). In eval mode the RNG is untouched.
    pub fn forward<R: Rng + ?Sized>(&self, x: &DenseMatrix<T>, mode: Mode, rng: &mut R) -> Result<DenseMatrix<T>> {
        self.check_input(x, "mlp_forward")?;
        if mode == Mode::Eval || self.dropout == 0.0 {
            return self.forward_eval(x);
        }
        Ok(self.forward_tape(x, Some(rng))?.pre.pop().expect("at least one layer"))
    }

    /// Deterministic forward pass without dropout.
    pub fn forward_eval(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.check_input(x, "mlp_forward")?;
        let mut h = x.clone();
        for l in 0..self.n_layers() {
            let mut z = DenseMatrix::zeros(h.rows(), self.dims[l + 1]);
            gemm(T::one(), &h, false, &self.params.weights[l], false, T::zero(), &mut z)?;
            z.add_row_vector(&self.params.biases[l])?;
            if l + 1 < self.n_layers() {
                z.map_inplace(relu);
            }
            h = z;
        }
        Ok(h)
    }

    fn forward_tape<R: Rng + ?Sized>(&self, x: &DenseMatrix<T>, mut rng: Option<&mut R>) -> Result<Tape<T>> {
        let layers = self.n_layers();
        let mut tape = Tape {
            inputs: Vec::with_capacity(layers),
            masks: Vec::with_capacity(layers),
            pre: Vec::with_capacity(layers),
        };
        let mut h = x.clone();
        for l in 0..layers {
            let mask = match rng.as_deref_mut() {
                Some(r) if self.dropout > 0.0 => {
                    // The input layer's mask is never read by the backward pass.
                    apply_dropout(h.as_mut_slice(), 1.0 - self.dropout, l > 0, r)
                }
                _ => None,
            };
            let mut z = DenseMatrix::zeros(h.rows(), self.dims[l + 1]);
            gemm(T::one(), &h, false, &self.params.weights[l], false, T::zero(), &mut z)?;
            z.add_row_vector(&self.params.biases[l])?;
            let next = if l + 1 < layers { z.map(relu) } else { DenseMatrix::zeros(0, 0) };
            tape.inputs.push(h);
            tape.masks.push(mask);
            tape.pre.push(z);
            h = next;
        }
        Ok(tape)
    }

    /// Weighted mean loss `Σ_i w_i ℓ_i / rows` and its parameter gradient
    /// (without weight decay). `rng = None` disables dropout.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &self,
        x: &DenseMatrix<T>,
        targets: &DenseMatrix<T>,
        node_weights: &[T],
        kind: LossKind,
        rng: Option<&mut R>,
    ) -> Result<(T, ParamSet<T>)> {
        self.check_batch(x, targets, node_weights)?;
        let mut grads = ParamSet::zeros_like(&self.dims);
        if x.rows() == 0 {
            return Ok((T::zero(), grads));
        }
        let tape = self.forward_tape(x, rng)?;
        let out = tape.pre.last().expect("at least one layer");
        let (loss, mut delta) = loss_and_output_grad(out, targets, node_weights, kind);
        for l in (0..self.n_layers()).rev() {
            gemm(T::one(), &tape.inputs[l], true, &delta, false, T::zero(), &mut grads.weights[l])?;
            grads.biases[l] = delta.column_sums();
            if l == 0 {
                break;
            }
            let mut back = DenseMatrix::zeros(delta.rows(), self.dims[l]);
            gemm(T::one(), &delta, false, &self.params.weights[l], true, T::zero(), &mut back)?;
            if let Some(mask) = &tape.masks[l] {
                let scale = T::lit(1.0 / (1.0 - self.dropout));
                for (g, &keep) in back.as_mut_slice().iter_mut().zip(mask) {
                    *g = if keep { *g * scale } else { T::zero() };
                }
            }
            for (g, &z) in back.as_mut_slice().iter_mut().zip(tape.pre[l - 1].as_slice()) {
                if z <= T::zero() {
                    *g = T::zero();
                }
            }
            delta = back;
        }
        Ok((loss, grads))
    }

    /// Weighted mean loss in eval mode.
    pub fn loss(&self, x: &DenseMatrix<T>, targets: &DenseMatrix<T>, node_weights: &[T], kind: LossKind) -> Result<T> {
        self.check_batch(x, targets, node_weights)?;
        if x.rows() == 0 {
            return Ok(T::zero());
        }
        let out = self.forward_eval(x)?;
        Ok(loss_and_output_grad(&out, targets, node_weights, kind).0)
    }

    fn check_batch(&self, x: &DenseMatrix<T>, targets: &DenseMatrix<T>, node_weights: &[T]) -> Result<()> {
        self.check_input(x, "mlp_train_step")?;
        let out = *self.dims.last().expect("validated dims");
        if targets.rows() != x.rows() || targets.cols() != out || node_weights.len() != x.rows() {
            return Err(Error::shape(
                "mlp_train_step",
                format!("{} rows of {out} targets and weights", x.rows()),
                format!("{}x{} targets, {} weights", targets.rows(), targets.cols(), node_weights.len()),
            ));
        }
        Ok(())
    }

    /// One dropout-enabled forward/backward pass followed by one Adam step.
    /// Weight decay adds `weight_decay * W` to weight gradients only.
    #[allow(clippy::too_many_arguments)]
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        x: &DenseMatrix<T>,
        targets: &DenseMatrix<T>,
        node_weights: &[T],
        kind: LossKind,
        lr: f64,
        weight_decay: f64,
        rng: &mut R,
    ) -> Result<T> {
        let (loss, mut grads) = self.loss_and_grad(x, targets, node_weights, kind, Some(rng))?;
        if !loss.is_finite() {
            return Err(Error::Numerical {
                context: "mlp_train_step",
                msg: format!("loss is {loss} after {} optimizer steps", self.adam.step),
                lr,
                tau: None,
            });
        }
        if weight_decay != 0.0 {
            let wd = T::lit(weight_decay);
            for (g, w) in grads.weights.iter_mut().zip(&self.params.weights) {
                g.axpy(wd, w)?;
            }
        }
        self.adam_step(&grads, lr);
        Ok(loss)
    }

    fn adam_step(&mut self, grads: &ParamSet<T>, lr: f64) {
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let b1 = T::lit(ADAM_BETA1);
        let b2 = T::lit(ADAM_BETA2);
        let c1 = T::one() - T::lit(ADAM_BETA1.powi(t));
        let c2 = T::one() - T::lit(ADAM_BETA2.powi(t));
        let lr = T::lit(lr);
        let eps = T::lit(ADAM_EPS);
        let moments = self.adam.first.iter_mut().zip(self.adam.second.iter_mut());
        for ((p, &g), (m, v)) in self.params.iter_mut().zip(grads.iter()).zip(moments) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    pub fn cast<U: Real>(&self) -> MlpModel<U> {
        let cast_set = |s: &ParamSet<T>| ParamSet {
            weights: s.weights.iter().map(DenseMatrix::cast).collect(),
            biases: s
                .biases
                .iter()
                .map(|b| b.iter().map(|&v| U::lit(v.to_f64_lossless())).collect())
                .collect(),
        };
        MlpModel {
            dims: self.dims.clone(),
            params: cast_set(&self.params),
            dropout: self.dropout,
            adam: AdamState {
                step: self.adam.step,
                first: cast_set(&self.adam.first),
                second: cast_set(&self.adam.second),
            },
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::contract("MlpModel", format!("layer dims {dims:?} need two or more positive entries")));
    }
    Ok(())
}

#[inline]
fn relu<T: Real>(v: T) -> T {
    // NaN passes through so non-finite inputs surface as a non-finite loss.
    if v <= T::zero() {
        T::zero()
    } else {
        v
    }
}

/// Inverted dropout in place: each entry survives with probability `keep`
/// (a u32 draw below `keep·2^32`) and is rescaled by `1/keep`. Keep flags
/// are returned only when `record` is set.
fn apply_dropout<T: Real, R: Rng + ?Sized>(values: &mut [T], keep: f64, record: bool, rng: &mut R) -> Option<Vec<bool>> {
    const CHUNK: usize = 1024;
    let threshold = (keep * 4_294_967_296.0) as u64;
    let factor = [T::zero(), T::lit(1.0 / keep)];
    let mut kept = if record { vec![false; values.len()] } else { Vec::new() };
    let mut buf = [0u32; CHUNK];
    let mut scratch = [false; CHUNK];
    for (c, chunk) in values.chunks_mut(CHUNK).enumerate() {
        let draws = &mut buf[..chunk.len()];
        rng.fill(&mut *draws);
        let flags = if record {
            &mut kept[c * CHUNK..c * CHUNK + chunk.len()]
        } else {
            &mut scratch[..chunk.len()]
        };
        for ((v, &u), flag) in chunk.iter_mut().zip(draws.iter()).zip(flags) {
            *flag = u64::from(u) < threshold;
            // Table lookup keeps the loop branch-free.
            *v *= factor[usize::from(*flag)];
        }
    }
    record.then_some(kept)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(logits: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = logits.clone();
    let cols = out.cols();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    debug_assert_eq!(out.cols(), cols);
    out
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Loss value and `∂loss/∂output`, both already divided by the row count.
fn loss_and_output_grad<T: Real>(
    out: &DenseMatrix<T>,
    targets: &DenseMatrix<T>,
    node_weights: &[T],
    kind: LossKind,
) -> (T, DenseMatrix<T>) {
    let rows = T::lit(out.rows() as f64);
    let mut grad = DenseMatrix::zeros(out.rows(), out.cols());
    let mut total = T::zero();
    for i in 0..out.rows() {
        let w = node_weights[i];
        let (o, t) = (out.row(i), targets.row(i));
        let g = grad.row_mut(i);
        match kind {
            LossKind::Mse => {
                let mut row_loss = T::zero();
                for ((g, &o), &t) in g.iter_mut().zip(o).zip(t) {
                    let r = o - t;
                    row_loss += r * r;
                    *g = T::lit(2.0) * w * r / rows;
                }
                total += w * row_loss;
            }
            LossKind::Ce => {
                let max = o.iter().copied().fold(T::neg_infinity(), T::max);
                let log_z = o.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
                let mass: T = t.iter().copied().sum();
                let mut row_loss = T::zero();
                for ((g, &o), &t) in g.iter_mut().zip(o).zip(t) {
                    let log_p = o - log_z;
                    row_loss -= t * log_p;
                    *g = w * (mass * log_p.exp() - t) / rows;
                }
                total += w * row_loss;
            }
        }
    }
    (total / rows, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type M = MlpModel<f64>;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let m = M::from_params(&[3, 4, 2], ParamSet::zeros_like(&[3, 4, 2]), 0.5).unwrap();
        let x = DenseMatrix::filled(5, 3, 1.5);
        assert_eq!(m.forward(&x, Mode::Train, &mut rng(0)).unwrap(), DenseMatrix::zeros(5, 2));
    }

    #[test]
    fn single_identity_layer_is_identity() {
        let params = ParamSet {
            weights: vec![DenseMatrix::identity(3)],
            biases: vec![vec![0.0; 3]],
        };
        let m = M::from_params(&[3, 3], params, 0.0).unwrap();
        let x = DenseMatrix::from_fn(4, 3, |i, j| i as f64 - j as f64 * 0.5);
        assert_eq!(m.forward_eval(&x).unwrap(), x);
    }

    #[test]
    fn hand_unrolled_relu_chain() {
        let params = ParamSet {
            weights: vec![
                DenseMatrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]).unwrap(),
                DenseMatrix::from_rows(&[[1.0], [-0.5]]).unwrap(),
            ],
            biases: vec![vec![0.1, -0.2], vec![0.3]],
        };
        let m = M::from_params(&[2, 2, 1], params, 0.0).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]).unwrap();
        // Row 0: z = [1+1+0.1, -1+4-0.2] = [2.1, 2.8]; out = 2.1 - 1.4 + 0.3.
        // Row 1: z = [-1+0.25+0.1, 1+1-0.2] = [-0.65, 1.8]; out = 0 - 0.9 + 0.3.
        let out = m.forward_eval(&x).unwrap();
        assert!((out.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((out.get(1, 0) + 0.6).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_ignores_dropout() {
        let m = M::new(&[4, 6, 3], 0.5, &mut rng(1)).unwrap();
        let mut m0 = m.clone();
        m0.dropout = 0.0;
        let x = DenseMatrix::from_fn(7, 4, |i, j| (i * j) as f64 * 0.1 - 0.3);
        let mut r = rng(9);
        assert_eq!(m.forward(&x, Mode::Eval, &mut r).unwrap(), m0.forward(&x, Mode::Train, &mut r).unwrap());
    }

    #[test]
    fn zero_weights_leave_parameters() {
        let mut m = M::new(&[3, 5, 2], 0.0, &mut rng(2)).unwrap();
        let before = m.params.clone();
        let x = DenseMatrix::filled(4, 3, 0.7);
        let t = DenseMatrix::filled(4, 2, 0.5);
        let loss = m.train_step(&x, &t, &[0.0; 4], LossKind::Mse, 0.01, 0.0, &mut rng(3)).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(m.params, before);
        assert_eq!(m.adam.step, 1);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut m = M::new(&[3, 5, 2], 0.3, &mut rng(4)).unwrap();
        let before = m.params.clone();
        let x = DenseMatrix::from_fn(4, 3, |i, j| (i + j) as f64);
        let t = DenseMatrix::filled(4, 2, 0.5);
        m.train_step(&x, &t, &[1.0; 4], LossKind::Ce, 0.0, 5e-4, &mut rng(5)).unwrap();
        assert_eq!(m.params, before);
    }

    #[test]
    fn linear_least_squares_gradient() {
        let w = DenseMatrix::from_rows(&[[0.5, -1.0], [2.0, 0.25], [-0.5, 1.0]]).unwrap();
        let params = ParamSet {
            weights: vec![w.clone()],
            biases: vec![vec![0.0, 0.0]],
        };
        let m = M::from_params(&[3, 2], params, 0.0).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let f = DenseMatrix::from_rows(&[[0.3, 0.7]]).unwrap();
        let (_, g) = m.loss_and_grad(&x, &f, &[1.0], LossKind::Mse, None::<&mut ChaCha8Rng>).unwrap();
        // Row-vector convention: out = xW, so ∂/∂W = 2 xᵀ(xW - f).
        let r = x.matmul(&w).unwrap().sub(&f).unwrap();
        let want = x.matmul_tn(&r).unwrap().scale(2.0);
        assert!(g.weights[0].max_abs_diff(&want).unwrap() < 1e-14);
    }

    #[test]
    fn ce_against_own_prediction_has_zero_output_gradient() {
        let m = M::new(&[3, 4, 3], 0.0, &mut rng(6)).unwrap();
        let x = DenseMatrix::from_fn(5, 3, |i, j| (i as f64 - j as f64) * 0.4);
        let target = softmax_rows(&m.forward_eval(&x).unwrap());
        let out = m.forward_eval(&x).unwrap();
        let (_, delta) = loss_and_output_grad(&out, &target, &[1.0; 5], LossKind::Ce);
        assert!(delta.max_abs() <= 1e-10);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = || {
            let mut r = rng(7);
            let mut m = M::new(&[4, 8, 3], 0.5, &mut r).unwrap();
            let x = DenseMatrix::from_fn(10, 4, |i, j| ((i * 3 + j) % 5) as f64 - 2.0);
            let t = DenseMatrix::from_fn(10, 3, |i, j| if i % 3 == j { 1.0 } else { 0.0 });
            for _ in 0..20 {
                m.train_step(&x, &t, &[1.0; 10], LossKind::Ce, 0.05, 5e-4, &mut r).unwrap();
            }
            m
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_loss_is_numerical_error() {
        let mut m = M::new(&[2, 2], 0.0, &mut rng(8)).unwrap();
        let x = DenseMatrix::from_rows(&[[f64::NAN, 0.0]]).unwrap();
        let t = DenseMatrix::zeros(1, 2);
        let err = m.train_step(&x, &t, &[1.0], LossKind::Mse, 0.01, 0.0, &mut rng(0)).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }
}
