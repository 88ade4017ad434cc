//! Row-major dense matrices.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix. `values.len() == rows * cols` always holds.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: std::fmt::Debug> std::fmt::Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.rows.min(16) {
            list.entry(&&self.values[i * self.cols..(i + 1) * self.cols]);
        }
        list.finish()?;
        if self.rows > 16 {
            write!(f, " ... ({}x{})", self.rows, self.cols)?;
        }
        Ok(())
    }
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape(
                "DenseMatrix::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                format!("{} values", values.len()),
            ));
        }
        Ok(DenseMatrix { rows, cols, values })
    }

    /// Build from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "DenseMatrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            values.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, values }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.values[i * c..(i + 1) * c]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact(0) panics, so zero-width matrices yield empty rows by hand.
        let cols = self.cols.max(1);
        let empty = self.cols == 0;
        let rows = self.rows;
        self.values
            .chunks_exact(cols)
            .chain(std::iter::repeat_n(&[][..], if empty { rows } else { 0 }))
    }

    pub(crate) fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(T) -> T) {
        for v in &mut self.values {
            *v = f(*v);
        }
    }

    pub fn scale(&self, a: T) -> Self {
        self.map(|v| v * a)
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: T, other: &Self) -> Result<()> {
        self.check_same_shape(other, "DenseMatrix::axpy")?;
        for (x, &y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "DenseMatrix::sub")?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "DenseMatrix::add")?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn frobenius_sq(&self) -> T {
        self.values.iter().map(|&v| v * v).sum()
    }

    /// `tr(self^T other)`, i.e. the elementwise inner product.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "DenseMatrix::dot")?;
        Ok(self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "DenseMatrix::max_abs_diff")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().map(|v| v.abs()).fold(T::zero(), T::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Gather rows in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }

    /// Per-row argmax; the lowest column index wins ties.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.row_iter().map(argmax).collect()
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for r in self.row_iter() {
            for (o, &v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    pub fn add_row_vector(&mut self, bias: &[T]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::shape(
                "DenseMatrix::add_row_vector",
                format!("{} entries", self.cols),
                format!("{} entries", bias.len()),
            ));
        }
        let cols = self.cols;
        if cols == 0 {
            return Ok(());
        }
        for r in self.values.chunks_exact_mut(cols) {
            for (x, &b) in r.iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| U::lit(v.to_f64_lossless())).collect(),
        }
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(T::one(), self, false, other, false, T::zero(), &mut out)?;
        Ok(out)
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zeros(self.cols, other.cols);
        gemm(T::one(), self, true, other, false, T::zero(), &mut out)?;
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zeros(self.rows, other.rows);
        gemm(T::one(), self, false, other, true, T::zero(), &mut out)?;
        Ok(out)
    }
}

/// Lowest-index argmax of a slice. Returns 0 for an empty slice.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// `c <- alpha * op(a) op(b) + beta * c` where `op` optionally transposes.
pub fn gemm<T: Real>(
    alpha: T,
    a: &DenseMatrix<T>,
    trans_a: bool,
    b: &DenseMatrix<T>,
    trans_b: bool,
    beta: T,
    c: &mut DenseMatrix<T>,
) -> Result<()> {
    let (m, ka) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    if ka != kb || c.rows != m || c.cols != n {
        return Err(Error::shape(
            "gemm",
            format!("({m}x{ka}) * ({ka}x{n}) -> {m}x{n}"),
            format!("({m}x{ka}) * ({kb}x{n}) -> {}x{}", c.rows, c.cols),
        ));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if ka == 0 {
        for v in &mut c.values {
            *v = beta * *v;
        }
        return Ok(());
    }
    let (rsa, csa) = if trans_a { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if trans_b { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: shapes were checked above and the three buffers are distinct
    // allocations (c is borrowed mutably, a and b immutably).
    unsafe {
        T::gemm_raw(
            m,
            ka,
            n,
            alpha,
            a.values.as_ptr(),
            rsa,
            csa,
            b.values.as_ptr(),
            rsb,
            csb,
            beta,
            c.values.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn gemm_variants_match_naive_product() {
        let a = DenseMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.5 - 2.0);
        let b = DenseMatrix::from_fn(3, 4, |i, j| ((i + 2 * j) % 5) as f64 - 1.5);
        let want = naive(&a, &b);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&want).unwrap() < 1e-12);
        assert!(a.transpose().matmul_tn(&b).unwrap().max_abs_diff(&want).unwrap() < 1e-12);
        assert!(a.matmul_nt(&b.transpose()).unwrap().max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn gemm_rejects_bad_shapes() {
        let a = DenseMatrix::<f64>::zeros(2, 3);
        let b = DenseMatrix::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Shape { .. })));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.25f64, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1f64, 0.7, 0.7]), 1);
    }

    #[test]
    fn zero_width_rows_iterate() {
        let m = DenseMatrix::<f64>::zeros(3, 0);
        assert_eq!(m.row_iter().count(), 3);
        assert_eq!(m.argmax_rows(), vec![0, 0, 0]);
    }

    #[test]
    fn from_rows_checks_lengths() {
        let err = DenseMatrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }
}
