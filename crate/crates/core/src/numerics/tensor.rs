//! Dense row-major `f64` tensors.
//!
//! Almost everything in the crate works with rank-2 tensors: scalars are
//! `1x1`, column vectors are `n x 1`. Higher ranks are only used for
//! storage (for example the per-channel `m x m x L` covariance stack).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 1.0)
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(1, 1, value)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Column vector `n x 1`.
    pub fn column(values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            shape: vec![n, 1],
            data: values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Shape("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            shape: vec![r, c],
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn diag_from(values: &[f64]) -> Self {
        let n = values.len();
        let mut t = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            t.data[i * n + i] = *v;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Product of all trailing dimensions.
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows() == other.rows() && self.cols() == other.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn col_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        Tensor::from_fn(c, r, |i, j| self.get(j, i))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.data.len(), other.data.len());
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Infinity norm: maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows())
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Returns an error naming the first non-finite entry.
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(k) => Err(Error::NonFinite(format!(
                "entry {} of tensor {:?} is {}",
                k, self.shape, self.data[k]
            ))),
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(self.rows(), other.cols());
        gemm(1.0, self, false, other, false, 0.0, &mut out);
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            shape: vec![idx.len(), c],
            data,
        }
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor {
        Tensor::from_fn(self.rows(), len, |i, j| self.get(i, start + j))
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows().min(self.cols())).map(|i| self.get(i, i)).collect()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let n = self.rows();
        if n != self.cols() {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (self.get(i, j) - self.get(j, i)).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 36 && self.shape.len() == 2 {
            write!(f, " {:?}", self.to_rows())
        } else {
            write!(f, " [{} values]", self.data.len())
        }
    }
}

/// Left operands at least this large are scanned for sparsity.
const SPARSE_MIN_LEN: usize = 2048;

/// `gemm` for a mostly-zero `a` and untransposed `b`: row updates skip the
/// zero entries.
fn sparse_lhs_gemm(alpha: f64, a: &Tensor, ta: bool, b: &Tensor, beta: f64, out: &mut Tensor) {
    if beta == 0.0 {
        out.data.fill(0.0);
    } else if beta != 1.0 {
        out.data.iter_mut().for_each(|v| *v *= beta);
    }
    let (ar, ac) = (a.rows(), a.cols());
    let n = b.cols();
    for i in 0..ar {
        for k in 0..ac {
            let x = a.data[i * ac + k];
            if x == 0.0 {
                continue;
            }
            let (dst, src) = if ta { (k, i) } else { (i, k) };
            let s = alpha * x;
            let o = &mut out.data[dst * n..(dst + 1) * n];
            for (ov, bv) in o.iter_mut().zip(&b.data[src * n..(src + 1) * n]) {
                *ov += s * bv;
            }
        }
    }
}

/// `out = alpha * op(a) op(b) + beta * out` on rank-2 tensors.
pub fn gemm(alpha: f64, a: &Tensor, ta: bool, b: &Tensor, tb: bool, beta: f64, out: &mut Tensor) {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "gemm inner dimensions {} vs {}", k, k2);
    assert_eq!(out.rows(), m);
    assert_eq!(out.cols(), n);
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in out.data.iter_mut() {
            *v *= beta;
        }
        return;
    }
    if !tb && a.data.len() >= SPARSE_MIN_LEN {
        let limit = a.data.len() / 8;
        if a.data.iter().filter(|v| **v != 0.0).take(limit + 1).count() <= limit {
            sparse_lhs_gemm(alpha, a, ta, b, beta, out);
            return;
        }
    }
    // SAFETY: strides describe the row-major buffers checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_storage() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::from_vec(&[2, 3, 4], vec![0.0; 24]).unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.cols(), 12);
    }

    #[test]
    fn sparse_path_matches_dense() {
        let a = Tensor::from_fn(40, 100, |i, j| if (i * 7 + j * 3) % 23 == 0 { (i + j) as f64 * 0.1 } else { 0.0 });
        let b = Tensor::from_fn(100, 9, |i, j| ((i * 5 + j) % 11) as f64 - 5.0);
        let c = Tensor::from_fn(40, 9, |i, j| ((i + j) % 4) as f64);
        let mut fast = c.clone();
        gemm(0.5, &a, false, &b, false, 2.0, &mut fast);
        let dense = Tensor::from_fn(40, 9, |i, j| {
            2.0 * c.get(i, j) + 0.5 * (0..100).map(|k| a.get(i, k) * b.get(k, j)).sum::<f64>()
        });
        assert!(fast.max_abs_diff(&dense) < 1e-12);
        let g = Tensor::from_fn(40, 9, |i, j| (i as f64 - j as f64) * 0.3);
        let mut at = Tensor::full(100, 9, f64::NAN);
        gemm(1.0, &a, true, &g, false, 0.0, &mut at);
        let want = Tensor::from_fn(100, 9, |k, j| (0..40).map(|i| a.get(i, k) * g.get(i, j)).sum::<f64>());
        assert!(at.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn gemm_transposes() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, -1.0]]).unwrap();
        let ab = a.matmul(&b);
        let mut abt = Tensor::zeros(3, 3);
        gemm(1.0, &b, true, &a, true, 0.0, &mut abt);
        assert_eq!(ab.transpose(), abt);
        assert_eq!(ab.get(2, 2), 5.0 * 2.0 - 6.0);
    }

    #[test]
    fn finite_check_reports_position() {
        let t = Tensor::column(vec![1.0, f64::NAN]);
        let err = t.check_finite().unwrap_err().to_string();
        assert!(err.contains("entry 1"), "{err}");
    }
}
