//! Compressed sparse row storage and the sparse-dense product.

use rayon::prelude::*;

use crate::counters;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rows above which `spmm` splits work across the rayon pool. Each output
/// row is produced by exactly one worker so the result does not depend on
/// the split.
const PAR_ROWS: usize = 4096;

/// CSR matrix. Column indices are strictly increasing within each row and
/// every stored value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Assemble from `(row, col, value)` triplets in any order. Repeated
    /// coordinates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Input(format!(
                    "entry ({r}, {c}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Input(format!("non-finite value at ({r}, {c})")));
            }
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("a previous entry exists") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Wrap raw CSR arrays after checking every structural invariant.
    pub fn from_raw_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::contract("CsrMatrix::from_raw_parts", msg));
        if row_ptr.len() != n_rows + 1 {
            return bad(format!("row_ptr has {} entries, want {}", row_ptr.len(), n_rows + 1));
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] != col_idx.len() || col_idx.len() != values.len() {
            return bad("row_ptr endpoints disagree with nnz".into());
        }
        for i in 0..n_rows {
            let (a, b) = (row_ptr[i], row_ptr[i + 1]);
            if a > b {
                return bad(format!("row_ptr decreases at row {i}"));
            }
            let cols = &col_idx[a..b];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.last().is_some_and(|&c| c >= n_cols) {
                return bad(format!("row {i} columns not strictly increasing below {n_cols}"));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value".into());
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(T::zero(), |k| vals[k])
    }

    /// Iterate stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn map_values(&self, mut f: impl FnMut(usize, usize, T) -> T) -> Result<Self> {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let v = f(i, self.col_idx[k], self.values[k]);
                if !v.is_finite() {
                    return Err(Error::contract("CsrMatrix::map_values", format!("non-finite value in row {i}")));
                }
                out.values[k] = v;
            }
        }
        Ok(out)
    }

    /// True when the sparsity pattern and values are symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.iter() {
            out.set(i, j, v);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| U::lit(v.to_f64_lossless())).collect(),
        }
    }

    /// Sparse-dense product `self * f`. Counted once per call under the
    /// width `f.cols()`.
    pub fn spmm(&self, f: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.n_cols != f.rows() {
            return Err(Error::contract(
                "spmm",
                format!(
                    "{}x{} operator applied to {}x{} dense matrix",
                    self.n_rows,
                    self.n_cols,
                    f.rows(),
                    f.cols()
                ),
            ));
        }
        counters::record_spmm(f.cols());
        let width = f.cols();
        let mut out = DenseMatrix::zeros(self.n_rows, width);
        if width == 0 {
            return Ok(out);
        }
        let src = f.as_slice();
        let kernel = |(i, dst): (usize, &mut [T])| {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                let s = &src[j * width..(j + 1) * width];
                for (d, &x) in dst.iter_mut().zip(s) {
                    *d += a * x;
                }
            }
        };
        let dst = out.as_mut_slice();
        if self.n_rows >= PAR_ROWS && rayon::current_num_threads() > 1 {
            dst.par_chunks_mut(width).enumerate().for_each(kernel);
        } else {
            dst.chunks_mut(width).enumerate().for_each(kernel);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn permutation_product() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let f = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let got = m.spmm(&f).unwrap();
        assert_eq!(got, DenseMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap());
    }

    #[test]
    fn zero_operator_gives_zero() {
        let m = CsrMatrix::<f64>::zeros(3, 4);
        let f = DenseMatrix::filled(4, 2, 7.0);
        assert_eq!(m.spmm(&f).unwrap(), DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn random_product_matches_dense_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut trip = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                if rng.random::<f64>() < 0.3 {
                    trip.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
        }
        let m = CsrMatrix::from_triplets(8, 8, trip).unwrap();
        let f = DenseMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        // Independent triple loop over the dense copy.
        let d = m.to_dense();
        let want = DenseMatrix::from_fn(8, 3, |i, j| (0..8).map(|k| d.get(i, k) * f.get(k, j)).sum());
        assert!(m.spmm(&f).unwrap().max_abs_diff(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let m = CsrMatrix::<f64>::zeros(3, 4);
        let f = DenseMatrix::zeros(3, 2);
        assert!(matches!(m.spmm(&f), Err(Error::Contract { .. })));
    }

    #[test]
    fn each_call_counts_once() {
        let m = CsrMatrix::<f64>::zeros(2, 2);
        let f = DenseMatrix::zeros(2, 5);
        let (_, snap) = counters::scoped(|| {
            m.spmm(&f).unwrap();
            m.spmm(&f).unwrap();
        });
        assert_eq!(snap.spmm_calls, 2);
        assert_eq!(snap.width(5), 2);
    }

    #[test]
    fn duplicates_sum_and_raw_parts_validate() {
        let m = CsrMatrix::from_triplets(1, 2, vec![(0, 1, 1.0), (0, 1, 2.0)]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert!(CsrMatrix::<f64>::from_raw_parts(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::<f64>::from_raw_parts(1, 2, vec![0, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
    }
}
