//! One-step updates of the pseudo-label matrix `F` and the objectives they
//! descend.
//!
//! Shared shapes: `f`, `mlp_out` and `y` are `n x c`, `labeled` has length
//! `n` and `y` rows of unlabeled nodes are ignored.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::scalar::Real;

/// Floor applied to MLP probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Allowed deviation of a probability row sum from one.
pub const STOCHASTIC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// Squared-error feature term with the Laplacian smoother.
    #[default]
    Mse,
    /// Cross-entropy feature term.
    Ce,
    /// Squared-error feature term with the squared Laplacian smoother.
    Hetero,
    /// Softmax-mapped `F` with cross-entropy feature and label terms.
    Unified,
}

impl Rule {
    /// SpMM calls issued by one update.
    pub fn spmm_per_step(self) -> u64 {
        match self {
            Rule::Hetero => 2,
            Rule::Mse | Rule::Ce | Rule::Unified => 1,
        }
    }

    /// True when the rule consumes MLP probabilities rather than raw outputs.
    pub fn wants_probabilities(self) -> bool {
        matches!(self, Rule::Ce | Rule::Unified)
    }
}

impl std::str::FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Rule::Mse),
            "ce" => Ok(Rule::Ce),
            "hetero" | "hetero_l2" => Ok(Rule::Hetero),
            "unified" | "unified_n" => Ok(Rule::Unified),
            other => Err(format!("unknown rule `{other}` (expected mse, ce, hetero or unified)")),
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Rule::Mse => "mse",
            Rule::Ce => "ce",
            Rule::Hetero => "hetero",
            Rule::Unified => "unified",
        })
    }
}

pub(crate) fn check_inputs<T: Real>(
    op: &'static str,
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_out: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[bool],
) -> Result<()> {
    let n = g.n();
    let c = f.cols();
    for (name, m) in [("F", f), ("MLP output", mlp_out), ("Y", y)] {
        if m.shape() != (n, c) {
            return Err(Error::shape(op, format!("{name} of shape {n}x{c}"), format!("{}x{}", m.rows(), m.cols())));
        }
    }
    if labeled.len() != n {
        return Err(Error::shape(op, format!("{n} mask entries"), format!("{}", labeled.len())));
    }
    for (name, m) in [("F", f), ("MLP output", mlp_out), ("Y", y)] {
        if !m.all_finite() {
            return Err(Error::contract(op, format!("{name} contains non-finite values")));
        }
    }
    Ok(())
}

fn check_lambdas<T: Real>(op: &'static str, lambda1: T, lambda2: T) -> Result<()> {
    if !(lambda1 >= T::zero() && lambda2 >= T::zero() && lambda1.is_finite() && lambda2.is_finite()) {
        return Err(Error::contract(op, format!("lambda1={lambda1}, lambda2={lambda2} must be finite and >= 0")));
    }
    Ok(())
}

pub(crate) fn check_stochastic<T: Real>(op: &'static str, p: &DenseMatrix<T>) -> Result<()> {
    for (i, row) in p.row_iter().enumerate() {
        let s: T = row.iter().copied().sum();
        if (s - T::one()).abs().to_f64_lossless() > STOCHASTIC_TOL || row.iter().any(|&v| v < T::zero()) {
            return Err(Error::contract(op, format!("row {i} is not a probability vector (sum {s})")));
        }
    }
    Ok(())
}

/// Gradient step on `λ1‖M - F‖² + tr(FᵀL̃F) + λ2‖F_L - Y_L‖²` with step
/// `1/(2(λ1+λ2+1))`. One SpMM.
pub fn update_f_mse<T: Real>(
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_out: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[bool],
    lambda1: T,
    lambda2: T,
) -> Result<DenseMatrix<T>> {
    check_inputs("update_f_mse", f, g, mlp_out, y, labeled)?;
    check_lambdas("update_f_mse", lambda1, lambda2)?;
    let s = lambda1 + lambda2 + T::one();
    let mut out = g.propagate(f)?;
    for i in 0..g.n() {
        let anchor = if labeled[i] { y.row(i) } else { f.row(i) };
        for ((o, &m), &a) in out.row_mut(i).iter_mut().zip(mlp_out.row(i)).zip(anchor) {
            *o = (*o + lambda1 * m + lambda2 * a) / s;
        }
    }
    Ok(out)
}

/// As [`update_f_mse`] but with every row anchored to `Y`:
/// `F' = (ÃF + λ1 M + λ2 Y) / (λ1+λ2+1)`.
pub fn update_f_mse_unmasked<T: Real>(
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_out: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    lambda1: T,
    lambda2: T,
) -> Result<DenseMatrix<T>> {
    let all = vec![true; g.n()];
    update_f_mse(f, g, mlp_out, y, &all, lambda1, lambda2)
}

/// Cross-entropy variant. `mlp_probs` rows must be probability vectors;
/// entries are floored at [`LOG_FLOOR`] before the log. One SpMM.
pub fn update_f_ce<T: Real>(
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_probs: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[bool],
    lambda1: T,
    lambda2: T,
) -> Result<DenseMatrix<T>> {
    check_inputs("update_f_ce", f, g, mlp_probs, y, labeled)?;
    check_lambdas("update_f_ce", lambda1, lambda2)?;
    check_stochastic("update_f_ce", mlp_probs)?;
    let denom = T::one() + lambda2;
    let log_coef = lambda1 / (T::lit(2.0) * denom);
    let floor = T::lit(LOG_FLOOR);
    let mut out = g.propagate(f)?;
    for i in 0..g.n() {
        let anchor = if labeled[i] { y.row(i) } else { f.row(i) };
        for ((o, &p), &a) in out.row_mut(i).iter_mut().zip(mlp_probs.row(i)).zip(anchor) {
            *o = log_coef * p.max(floor).ln() + *o / denom + lambda2 * a / denom;
        }
    }
    Ok(out)
}

/// `L̃²F = L̃(L̃F)`, equal to `F - 2ÃF + Ã(ÃF)`. Two SpMMs.
pub fn laplacian_squared_apply<T: Real>(g: &SparseGraph<T>, f: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let lf = g.laplacian_apply(f)?;
    g.laplacian_apply(&lf)
}

/// Gradient step on `λ1‖M - F‖² + tr(FᵀL̃²F) + λ2‖F_L - Y_L‖²` with step
/// `1/(2(λ1+λ2+4))`. Two SpMMs.
pub fn update_f_hetero<T: Real>(
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_out: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[bool],
    lambda1: T,
    lambda2: T,
) -> Result<DenseMatrix<T>> {
    check_inputs("update_f_hetero", f, g, mlp_out, y, labeled)?;
    check_lambdas("update_f_hetero", lambda1, lambda2)?;
    let denom = lambda1 + lambda2 + T::lit(4.0);
    let smooth = laplacian_squared_apply(g, f)?;
    let mut out = f.clone();
    for i in 0..g.n() {
        let lab = if labeled[i] { lambda2 } else { T::zero() };
        let rows = out.row_mut(i).iter_mut().zip(mlp_out.row(i)).zip(y.row(i)).zip(smooth.row(i));
        for (((o, &m), &t), &s) in rows {
            let grad_half = lambda1 * (*o - m) + s + lab * (*o - t);
            *o -= grad_half / denom;
        }
    }
    Ok(out)
}

/// Step that guarantees descent for the softmax objective: the Hessian is
/// bounded by `λ1/2 + 4 + λ2/2`, and this is the inverse of that bound.
pub fn unified_default_step<T: Real>(lambda1: T, lambda2: T) -> T {
    T::lit(2.0) / (lambda1 + lambda2 + T::lit(8.0))
}

/// Gradient step `F - η ∂L/∂F` on
/// `λ1 Σ_i w_i CE(M_i, S(F)_i) + tr(FᵀL̃F) + λ2 Σ_{i∈L} CE(Y_i, S(F)_i)`,
/// with `∂L/∂F = λ1 W(S(F) - M) + 2L̃F + λ2 M_L(S(F) - Y)` and `S` the row
/// softmax. `mlp_probs` rows must be probability vectors. One SpMM.
#[allow(clippy::too_many_arguments)]
pub fn update_f_unified<T: Real>(
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_probs: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[bool],
    weight_diag: &[T],
    lambda1: T,
    lambda2: T,
    eta: T,
) -> Result<DenseMatrix<T>> {
    check_inputs("update_f_unified", f, g, mlp_probs, y, labeled)?;
    check_lambdas("update_f_unified", lambda1, lambda2)?;
    check_stochastic("update_f_unified", mlp_probs)?;
    if !(eta > T::zero() && eta.is_finite()) {
        return Err(Error::contract("update_f_unified", format!("step size {eta} must be positive")));
    }
    if weight_diag.len() != g.n() || weight_diag.iter().any(|&w| !(w >= T::zero() && w <= T::one())) {
        return Err(Error::contract("update_f_unified", "weight_diag needs n entries in [0, 1]"));
    }
    let af = g.propagate(f)?;
    let mut out = f.clone();
    let mut s = vec![T::zero(); f.cols()];
    for i in 0..g.n() {
        s.copy_from_slice(f.row(i));
        crate::neural::softmax_in_place(&mut s);
        let lab = if labeled[i] { lambda2 } else { T::zero() };
        let feat = lambda1 * weight_diag[i];
        let rows = out
            .row_mut(i)
            .iter_mut()
            .zip(&s)
            .zip(mlp_probs.row(i))
            .zip(y.row(i))
            .zip(af.row(i));
        for ((((o, &sv), &m), &t), &a) in rows {
            let grad = feat * (sv - m) + T::lit(2.0) * (*o - a) + lab * (sv - t);
            *o -= eta * grad;
        }
    }
    Ok(out)
}

fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn label_term<T: Real>(f: &DenseMatrix<T>, y: &DenseMatrix<T>, labeled: &[bool]) -> T {
    (0..f.rows())
        .filter(|&i| labeled[i])
        .map(|i| squared_distance(f.row(i), y.row(i)))
        .sum()
}

/// `λ1‖M - F‖² + tr(FᵀL̃F) + λ2‖F_L - Y_L‖²`.
pub fn objective_mse<T: Real>(
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_out: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[bool],
    lambda1: T,
    lambda2: T,
) -> Result<T> {
    check_inputs("objective_mse", f, g, mlp_out, y, labeled)?;
    let feat = mlp_out.sub(f)?.frobenius_sq();
    Ok(lambda1 * feat + g.laplacian_quadratic(f)? + lambda2 * label_term(f, y, labeled))
}

/// `λ1‖M - F‖² + ‖L̃F‖² + λ2‖F_L - Y_L‖²`, using `tr(FᵀL̃²F) = ‖L̃F‖²`.
pub fn objective_hetero<T: Real>(
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_out: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[bool],
    lambda1: T,
    lambda2: T,
) -> Result<T> {
    check_inputs("objective_hetero", f, g, mlp_out, y, labeled)?;
    let feat = mlp_out.sub(f)?.frobenius_sq();
    let smooth = g.laplacian_apply(f)?.frobenius_sq();
    Ok(lambda1 * feat + smooth + lambda2 * label_term(f, y, labeled))
}

fn cross_entropy_against_softmax<T: Real>(target: &[T], logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_z = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    target.iter().zip(logits).map(|(&t, &z)| -t * (z - log_z)).sum()
}

/// Objective descended by [`update_f_unified`].
#[allow(clippy::too_many_arguments)]
pub fn objective_unified<T: Real>(
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_probs: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[bool],
    weight_diag: &[T],
    lambda1: T,
    lambda2: T,
) -> Result<T> {
    check_inputs("objective_unified", f, g, mlp_probs, y, labeled)?;
    let mut total = g.laplacian_quadratic(f)?;
    for i in 0..g.n() {
        total += lambda1 * weight_diag[i] * cross_entropy_against_softmax(mlp_probs.row(i), f.row(i));
        if labeled[i] {
            total += lambda2 * cross_entropy_against_softmax(y.row(i), f.row(i));
        }
    }
    Ok(total)
}
