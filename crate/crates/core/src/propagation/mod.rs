//! Updates of the pseudo-label matrix, label propagation and the dense
//! oracles that pin them down.

mod lp;
mod oracle;
mod rules;

pub use lp::{dense_lp_operator, feature_diffusion, label_propagation, lp_closed_form};
pub use oracle::{altopt_fixed_point_oracle, prop2_loss_equivalence, solve_dense, Prop2Report, MAX_DENSE_NODES};
pub use rules::{
    laplacian_squared_apply, objective_hetero, objective_mse, objective_unified, unified_default_step, update_f_ce,
    update_f_hetero, update_f_mse, update_f_mse_unmasked, update_f_unified, Rule, LOG_FLOOR, STOCHASTIC_TOL,
};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::scalar::Real;

/// Pseudo-label matrix plus whether its rows are currently probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelState<T> {
    pub f: DenseMatrix<T>,
    pub normalized: bool,
}

impl<T: Real> PseudoLabelState<T> {
    /// Start from the one-hot label matrix.
    pub fn from_labels(y: &DenseMatrix<T>) -> Self {
        PseudoLabelState {
            f: y.clone(),
            normalized: false,
        }
    }
}

/// Coefficients and rule shared by every step in a propagation round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams<T> {
    pub lambda1: T,
    pub lambda2: T,
    /// Propagation layers (steps) per round.
    pub layers: usize,
    pub rule: Rule,
}

/// `layers` consecutive steps of `params.rule`. `mlp_out` holds raw outputs
/// for squared-error rules and probabilities for the others; `weight_diag`
/// is consulted only by [`Rule::Unified`].
pub fn propagate_round<T: Real>(
    f: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    mlp_out: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[bool],
    weight_diag: &[T],
    params: &PropagationParams<T>,
) -> Result<DenseMatrix<T>> {
    let PropagationParams {
        lambda1,
        lambda2,
        layers,
        rule,
    } = *params;
    let mut cur = f.clone();
    for _ in 0..layers {
        cur = match rule {
            Rule::Mse => update_f_mse(&cur, g, mlp_out, y, labeled, lambda1, lambda2)?,
            Rule::Ce => update_f_ce(&cur, g, mlp_out, y, labeled, lambda1, lambda2)?,
            Rule::Hetero => update_f_hetero(&cur, g, mlp_out, y, labeled, lambda1, lambda2)?,
            Rule::Unified => {
                let eta = unified_default_step(lambda1, lambda2);
                update_f_unified(&cur, g, mlp_out, y, labeled, weight_diag, lambda1, lambda2, eta)?
            }
        };
        if !cur.all_finite() {
            return Err(Error::Numerical {
                context: "propagate_round",
                msg: format!("{rule} update produced non-finite pseudo labels"),
                lr: 0.0,
                tau: None,
            });
        }
    }
    Ok(cur)
}

/// One step of the label-masked propagation with no feature term:
/// labeled rows `(ÃP + λ2 Y)/(1+λ2)`, unlabeled rows `(ÃP + λ2 P)/(1+λ2)`.
/// Written independently of [`update_f_mse`] as a reference.
pub fn masked_label_propagation<T: Real>(
    y: &DenseMatrix<T>,
    g: &SparseGraph<T>,
    labeled: &[bool],
    lambda2: T,
    k: usize,
) -> Result<DenseMatrix<T>> {
    if labeled.len() != g.n() || y.rows() != g.n() {
        return Err(Error::shape("masked_label_propagation", format!("{} rows", g.n()), format!("{}", y.rows())));
    }
    let keep = T::one() / (T::one() + lambda2);
    let mix = lambda2 * keep;
    let mut p = y.clone();
    for _ in 0..k {
        let ap = g.propagate(&p)?;
        let mut next = ap.scale(keep);
        for (i, &is_lab) in labeled.iter().enumerate() {
            let anchor = if is_lab { y.row(i) } else { p.row(i) };
            for (v, &a) in next.row_mut(i).iter_mut().zip(anchor) {
                *v += mix * a;
            }
        }
        p = next;
    }
    Ok(p)
}

#[cfg(test)]
mod tests;
