//! Temperature normalization of pseudo labels, entropy confidence and
//! class-balanced selection of confident unlabeled nodes.

use crate::dense::{argmax, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-wise `softmax(F / τ)` with max subtraction.
pub fn softmax_temperature<T: Real>(f: &DenseMatrix<T>, tau: T) -> Result<DenseMatrix<T>> {
    if !(tau > T::zero() && tau.is_finite()) {
        return Err(Error::contract("softmax_temperature", format!("temperature {tau} must be positive")));
    }
    let mut out = f.scale(T::one() / tau);
    for i in 0..out.rows() {
        crate::neural::softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

/// `1 - H(p) / ln c` with natural logs and `0 ln 0 = 0`. A single class
/// carries no uncertainty and gets weight 1.
pub fn entropy_weight<T: Real>(row: &[T], c: usize) -> T {
    if c <= 1 {
        return T::one();
    }
    let h: T = row
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| -p * p.ln())
        .sum();
    let w = T::one() - h / T::lit(c as f64).ln();
    w.max(T::zero()).min(T::one())
}

/// Confident unlabeled nodes, grouped by class in class order; within a class
/// by descending weight then ascending node index.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SelectionResult<T> {
    pub selected: Vec<usize>,
    pub weights: Vec<T>,
    pub per_class_counts: Vec<usize>,
}

impl<T> SelectionResult<T> {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Assign every unlabeled node to its argmax class (lowest index wins) and
/// keep the `m` highest-weight nodes of each class.
pub fn select_balanced<T: Real>(f_normalized: &DenseMatrix<T>, labeled: &[bool], m: usize) -> Result<SelectionResult<T>> {
    if labeled.len() != f_normalized.rows() {
        return Err(Error::shape(
            "select_balanced",
            format!("{} mask entries", f_normalized.rows()),
            format!("{}", labeled.len()),
        ));
    }
    let c = f_normalized.cols();
    let mut by_class: Vec<Vec<(T, usize)>> = vec![Vec::new(); c];
    if m > 0 && c > 0 {
        for (i, row) in f_normalized.row_iter().enumerate() {
            if !labeled[i] {
                by_class[argmax(row)].push((entropy_weight(row, c), i));
            }
        }
    }
    let mut out = SelectionResult {
        selected: Vec::new(),
        weights: Vec::new(),
        per_class_counts: vec![0; c],
    };
    for (class, mut cands) in by_class.into_iter().enumerate() {
        cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        cands.truncate(m);
        out.per_class_counts[class] = cands.len();
        for (w, i) in cands {
            out.selected.push(i);
            out.weights.push(w);
        }
    }
    Ok(out)
}
