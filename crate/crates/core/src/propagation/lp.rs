//! Label propagation `P ← (1-α)ÃP + αY` and its closed form.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::scalar::Real;

fn check<T: Real>(op: &'static str, y: &DenseMatrix<T>, g: &SparseGraph<T>, alpha: T) -> Result<()> {
    if y.rows() != g.n() {
        return Err(Error::shape(op, format!("{} rows", g.n()), format!("{}", y.rows())));
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::contract(op, format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// `K` iterations of `P ← (1-α)ÃP + αY` from `P = Y`. `K` SpMMs.
pub fn label_propagation<T: Real>(y: &DenseMatrix<T>, g: &SparseGraph<T>, alpha: T, k: usize) -> Result<DenseMatrix<T>> {
    check("label_propagation", y, g, alpha)?;
    let keep = T::one() - alpha;
    let mut p = y.clone();
    for _ in 0..k {
        let mut next = g.propagate(&p)?;
        for (v, &t) in next.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *v = keep * *v + alpha * t;
        }
        p = next;
    }
    Ok(p)
}

/// `ĀY` with `Ā = (1-α)^K Ã^K + α Σ_{k<K} (1-α)^k Ã^k`, accumulated term by
/// term from the powers `Ã^k Y`. `K` SpMMs; `Ā` is never formed.
pub fn lp_closed_form<T: Real>(y: &DenseMatrix<T>, g: &SparseGraph<T>, alpha: T, k: usize) -> Result<DenseMatrix<T>> {
    check("lp_closed_form", y, g, alpha)?;
    if k == 0 {
        return Ok(y.clone());
    }
    let keep = T::one() - alpha;
    let mut power = y.clone();
    let mut acc = y.scale(alpha);
    let mut weight = T::one();
    for step in 1..=k {
        power = g.propagate(&power)?;
        weight *= keep;
        let coef = if step == k { weight } else { alpha * weight };
        acc.axpy(coef, &power)?;
    }
    Ok(acc)
}

/// Smoothed features `X' = LP(X, α)` with `K` propagation layers.
pub fn feature_diffusion<T: Real>(x: &DenseMatrix<T>, g: &SparseGraph<T>, alpha: T, k: usize) -> Result<DenseMatrix<T>> {
    label_propagation(x, g, alpha, k)
}

/// Dense `Ā` built from explicit dense powers of `Ã`. Test oracle only.
pub fn dense_lp_operator<T: Real>(g: &SparseGraph<T>, alpha: T, k: usize) -> Result<DenseMatrix<T>> {
    let n = g.n();
    let a = g.norm_adj().to_dense();
    let keep = T::one() - alpha;
    let mut power = DenseMatrix::identity(n);
    let mut out = DenseMatrix::zeros(n, n);
    let mut weight = T::one();
    for step in 0..=k {
        let coef = if step == k { weight } else { alpha * weight };
        out.axpy(coef, &power)?;
        if step < k {
            power = power.matmul(&a)?;
            weight *= keep;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge() -> SparseGraph<f64> {
        SparseGraph::from_edges(&[(0, 1)], 2).unwrap()
    }

    #[test]
    fn one_iteration_by_hand() {
        let y = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let p = label_propagation(&y, &edge(), 0.5, 1).unwrap();
        assert_eq!(p, DenseMatrix::from_rows(&[[0.5, 0.0], [0.5, 0.0]]).unwrap());
        assert_eq!(label_propagation(&y, &edge(), 0.5, 0).unwrap(), y);
    }

    #[test]
    fn closed_form_single_layer() {
        let g = SparseGraph::from_edges(&[(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)], 4).unwrap();
        let y = DenseMatrix::from_fn(4, 2, |i, j| ((i + j) % 3) as f64);
        let want = {
            let mut w = g.propagate(&y).unwrap().scale(0.7);
            w.axpy(0.3, &y).unwrap();
            w
        };
        assert!(lp_closed_form(&y, &g, 0.3, 1).unwrap().max_abs_diff(&want).unwrap() < 1e-15);
    }

    #[test]
    fn near_unit_alpha_returns_labels() {
        let g = SparseGraph::from_edges(&[(0, 1), (1, 2)], 3).unwrap();
        let y = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let p = lp_closed_form(&y, &g, 1.0 - 1e-12, 10).unwrap();
        assert!(p.max_abs_diff(&y).unwrap() <= 1e-9);
    }

    #[test]
    fn diffusion_examples() {
        let x = DenseMatrix::from_rows(&[[1.0], [0.0]]).unwrap();
        assert_eq!(feature_diffusion(&x, &edge(), 0.5, 1).unwrap(), DenseMatrix::from_rows(&[[0.5], [0.5]]).unwrap());
        let edges: Vec<_> = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).collect();
        let complete = SparseGraph::from_edges(&edges, 5).unwrap();
        let flat = DenseMatrix::from_fn(5, 3, |_, j| j as f64 + 0.5);
        assert!(feature_diffusion(&flat, &complete, 0.2, 10).unwrap().max_abs_diff(&flat).unwrap() < 1e-12);
    }

    #[test]
    fn dense_operator_matches_closed_form() {
        let g = SparseGraph::from_edges(&[(0, 1), (1, 2), (2, 0), (2, 3)], 4).unwrap();
        let y = DenseMatrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64 * 0.25);
        let a = dense_lp_operator(&g, 0.4, 5).unwrap();
        let want = a.matmul(&y).unwrap();
        assert!(lp_closed_form(&y, &g, 0.4, 5).unwrap().max_abs_diff(&want).unwrap() < 1e-13);
    }

    #[test]
    fn rejects_bad_alpha() {
        let y = DenseMatrix::<f64>::zeros(2, 1);
        assert!(label_propagation(&y, &edge(), 1.0, 1).is_err());
        assert!(lp_closed_form(&y, &edge(), 0.0, 1).is_err());
    }
}
