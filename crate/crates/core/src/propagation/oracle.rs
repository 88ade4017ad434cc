//! Dense reference computations used to check the sparse iterations.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::scalar::Real;

use super::lp::{dense_lp_operator, lp_closed_form};
use super::rules::check_stochastic;

/// Largest graph accepted by the dense oracles.
pub const MAX_DENSE_NODES: usize = 200;

/// Solve `A X = B` by LU factorization with partial pivoting.
pub fn solve_dense<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(Error::shape(
            "solve_dense",
            format!("square system with {} right-hand rows", a.rows()),
            format!("{}x{} and {} rows", a.rows(), a.cols(), b.rows()),
        ));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs().max(T::min_positive_value());
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu.get(i, col).abs().partial_cmp(&lu.get(j, col).abs()).expect("finite entries"))
            .expect("non-empty range");
        if lu.get(pivot, col).abs() <= scale * T::epsilon() * T::lit(n as f64) {
            return Err(Error::Oracle(format!("singular system at column {col}")));
        }
        if pivot != col {
            swap_rows(&mut lu, pivot, col);
            swap_rows(&mut x, pivot, col);
        }
        let p = lu.get(col, col);
        for r in col + 1..n {
            let factor = lu.get(r, col) / p;
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                let v = lu.get(r, j) - factor * lu.get(col, j);
                lu.set(r, j, v);
            }
            for j in 0..x.cols() {
                let v = x.get(r, j) - factor * x.get(col, j);
                x.set(r, j, v);
            }
        }
    }
    for col in (0..n).rev() {
        let p = lu.get(col, col);
        for j in 0..x.cols() {
            let mut v = x.get(col, j);
            for k in col + 1..n {
                v -= lu.get(col, k) * x.get(k, j);
            }
            x.set(col, j, v / p);
        }
    }
    Ok(x)
}

fn swap_rows<T: Real>(m: &mut DenseMatrix<T>, a: usize, b: usize) {
    for j in 0..m.cols() {
        let (va, vb) = (m.get(a, j), m.get(b, j));
        m.set(a, j, vb);
        m.set(b, j, va);
    }
}

/// Limit of the unmasked squared-error iteration: solves
/// `((λ1+λ2+1)I - Ã) F* = λ1 M + λ2 Y` densely.
pub fn altopt_fixed_point_oracle<T: Real>(
    g: &SparseGraph<T>,
    mlp_out: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    lambda1: T,
    lambda2: T,
) -> Result<DenseMatrix<T>> {
    let n = g.n();
    if n > MAX_DENSE_NODES {
        return Err(Error::contract("altopt_fixed_point_oracle", format!("{n} nodes exceeds {MAX_DENSE_NODES}")));
    }
    if mlp_out.shape() != y.shape() || y.rows() != n {
        return Err(Error::shape("altopt_fixed_point_oracle", format!("{n} rows"), format!("{}", y.rows())));
    }
    let s = lambda1 + lambda2 + T::one();
    let mut system = g.norm_adj().to_dense().scale(-T::one());
    for i in 0..n {
        system.set(i, i, system.get(i, i) + s);
    }
    let mut rhs = mlp_out.scale(lambda1);
    rhs.axpy(lambda2, y)?;
    solve_dense(&system, &rhs)
}

/// Both sides of the cross-entropy expansion and their gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop2Report {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
}

/// Compare `Σ_i CE(f_i, T_i)` for `T = Ā((α-β)F' + βY)` (via the sparse
/// closed form) with `(α-β) Σ_{ij} ā_ij CE(f_i, f'_j) + β Σ_{i, j∈L} ā_ij CE(f_i, y_j)`
/// (via an explicit dense `Ā`). `CE(p, t) = -Σ_k t_k ln p_k`.
#[allow(clippy::too_many_arguments)]
pub fn prop2_loss_equivalence<T: Real>(
    g: &SparseGraph<T>,
    probs_current: &DenseMatrix<T>,
    probs_prev: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    labeled: &[usize],
    alpha: T,
    beta: T,
    k: usize,
) -> Result<Prop2Report> {
    let n = g.n();
    if n > MAX_DENSE_NODES {
        return Err(Error::contract("prop2_loss_equivalence", format!("{n} nodes exceeds {MAX_DENSE_NODES}")));
    }
    check_stochastic("prop2_loss_equivalence", probs_current)?;
    check_stochastic("prop2_loss_equivalence", probs_prev)?;
    let c = probs_current.cols();
    let mut y_labeled = DenseMatrix::zeros(n, c);
    for &j in labeled {
        if j >= n {
            return Err(Error::Input(format!("labeled node {j} outside 0..{n}")));
        }
        y_labeled.row_mut(j).copy_from_slice(y.row(j));
    }
    let log_f = probs_current.map(|p| p.max(T::lit(super::rules::LOG_FLOOR)).ln());
    let ce = |i: usize, target: &[T]| -> T { -target.iter().zip(log_f.row(i)).map(|(&t, &l)| t * l).sum::<T>() };

    let mut mixed = probs_prev.scale(alpha - beta);
    mixed.axpy(beta, &y_labeled)?;
    let targets = lp_closed_form(&mixed, g, alpha, k)?;
    let lhs: T = (0..n).map(|i| ce(i, targets.row(i))).sum();

    let a_bar = dense_lp_operator(g, alpha, k)?;
    let mut feature_part = T::zero();
    let mut label_part = T::zero();
    for i in 0..n {
        for j in 0..n {
            feature_part += a_bar.get(i, j) * ce(i, probs_prev.row(j));
        }
        for &j in labeled {
            label_part += a_bar.get(i, j) * ce(i, y.row(j));
        }
    }
    let rhs = (alpha - beta) * feature_part + beta * label_part;
    let (lhs, rhs) = (lhs.to_f64_lossless(), rhs.to_f64_lossless());
    Ok(Prop2Report {
        lhs,
        rhs,
        diff: (lhs - rhs).abs(),
    })
}
