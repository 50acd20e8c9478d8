//! Dense row-major matrices and the handful of kernels attention needs.
//!
//! Storage is either `f32` or `f64` (see [`Scalar`]), but every reduction
//! (matmul, softmax) accumulates in `f64` and rounds once on store. Every
//! operation checks its output for NaN/Inf and reports an error instead of
//! returning a non-finite matrix.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage float width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Width {
    F32,
    F64,
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Width::F32 => f.write_str("f32"),
            Width::F64 => f.write_str("f64"),
        }
    }
}

impl FromStr for Width {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f32" | "single" => Ok(Width::F32),
            "f64" | "double" => Ok(Width::F64),
            other => Err(format!("unknown width `{other}` (expected f32 or f64)")),
        }
    }
}

/// A storage element type. Implemented for `f32` and `f64` only.
pub trait Scalar:
    Copy
    + PartialEq
    + PartialOrd
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + Serialize
    + 'static
{
    const WIDTH: Width;
    /// Machine epsilon of the storage type, widened to `f64`.
    const EPSILON: f64;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn is_finite(self) -> bool {
        self.to_f64().is_finite()
    }
}

impl Scalar for f32 {
    const WIDTH: Width = Width::F32;
    const EPSILON: f64 = f32::EPSILON as f64;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const WIDTH: Width = Width::F64;
    const EPSILON: f64 = f64::EPSILON;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Distributions accepted by [`Matrix::random_fill`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fill {
    StandardNormal,
    /// Uniform on `[-1, 1]`.
    UniformSymmetric,
}

/// Dense row-major matrix whose entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

fn first_non_finite<T: Scalar>(cols: usize, data: &[T]) -> Option<(usize, usize)> {
    data.iter().position(|x| !x.is_finite()).map(|idx| {
        match (idx.checked_div(cols), idx.checked_rem(cols)) {
            (Some(r), Some(c)) => (r, c),
            _ => (idx, 0),
        }
    })
}

impl<T: Scalar> Matrix<T> {
    fn checked(op: &'static str, rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        debug_assert_eq!(data.len(), rows * cols);
        if let Some((row, col)) = first_non_finite(cols, &data) {
            return Err(Error::NonFinite { op, row, col });
        }
        Ok(Self { rows, cols, data })
    }

    /// Wraps row-major `data`; fails on a length mismatch or a non-finite entry.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!(
                    "{rows}x{cols} needs {} values, got {}",
                    rows * cols,
                    data.len()
                ),
            ));
        }
        Self::checked("Matrix::new", rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::from_f64(1.0);
        }
        m
    }

    /// Builds a matrix from an `f64`-valued generator, rounding once to `T`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(T::from_f64(f(i, j)));
            }
        }
        Self::checked("Matrix::from_fn", rows, cols, data)
    }

    /// Builds a matrix from nested `f64` rows (test and example convenience).
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape(
                "Matrix::from_rows",
                format!("ragged rows: expected {cols} columns, found {}", bad.len()),
            ));
        }
        Self::from_fn(rows.len(), cols, |i, j| rows[i][j])
    }

    /// Deterministic fill from a ChaCha8 stream seeded with `seed`.
    ///
    /// Samples are drawn in `f64` in row-major order and rounded to `T`, so
    /// the same seed gives the same matrix (up to rounding) at either width.
    pub fn random_fill(rows: usize, cols: usize, seed: u64, fill: Fill) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| {
                let x: f64 = match fill {
                    Fill::StandardNormal => rng.sample(StandardNormal),
                    Fill::UniformSymmetric => rng.random_range(-1.0..=1.0),
                };
                T::from_f64(x)
            })
            .collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of stored values.
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Rows as `f64` vectors.
    pub fn to_rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.to_f64()).collect())
            .collect()
    }

    /// Converts to another storage width, failing if a value overflows it.
    pub fn cast<U: Scalar>(&self) -> Result<Matrix<U>> {
        let data = self.data.iter().map(|x| U::from_f64(x.to_f64())).collect();
        Matrix::checked("Matrix::cast", self.rows, self.cols, data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.to_f64().abs()))
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// `self · rhs`, accumulated in `f64`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, rhs.rows, rhs.cols
                ),
            ));
        }
        let n = rhs.cols;
        let mut acc = vec![0.0f64; n];
        let mut data = Vec::with_capacity(self.rows * n);
        for i in 0..self.rows {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (p, &a_ip) in self.row(i).iter().enumerate() {
                let a_ip = a_ip.to_f64();
                for (a, &b) in acc.iter_mut().zip(rhs.row(p)) {
                    *a += a_ip * b.to_f64();
                }
            }
            data.extend(acc.iter().map(|&x| T::from_f64(x)));
        }
        Self::checked("matmul", self.rows, n, data)
    }

    /// `self · rhsᵀ` without materialising the transpose.
    ///
    /// Each entry is the `f64` dot product of two rows, summed in column
    /// order, so it agrees bit-for-bit with `self.matmul(&rhs.transpose())`.
    pub fn matmul_nt(&self, rhs: &Self) -> Result<Self> {
        self.matmul_nt_map(rhs, |_, _, dot| dot)
    }

    /// `self · rhsᵀ` with a per-entry epilogue applied to the `f64` dot
    /// product before rounding to `T`.
    pub fn matmul_nt_map(
        &self,
        rhs: &Self,
        mut epilogue: impl FnMut(usize, usize, f64) -> f64,
    ) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::shape(
                "matmul_nt",
                format!(
                    "{}x{} times transpose of {}x{}",
                    self.rows, self.cols, rhs.rows, rhs.cols
                ),
            ));
        }
        let mut data = Vec::with_capacity(self.rows * rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for l in 0..rhs.rows {
                let dot = dot_f64(a, rhs.row(l));
                data.push(T::from_f64(epilogue(i, l, dot)));
            }
        }
        Self::checked("matmul_nt", self.rows, rhs.rows, data)
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn row_softmax(&self) -> Result<Self> {
        self.row_softmax_masked(false)
    }

    /// Row-wise softmax; with `causal` set, entries with `j > i` get weight
    /// exactly zero and are excluded from the row max and normaliser.
    pub fn row_softmax_masked(&self, causal: bool) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        let mut buf = vec![0.0f64; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let live = if causal {
                (i + 1).min(self.cols)
            } else {
                self.cols
            };
            let max = row[..live]
                .iter()
                .map(|x| x.to_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (b, x) in buf[..live].iter_mut().zip(row) {
                *b = (x.to_f64() - max).exp();
                sum += *b;
            }
            data.extend(buf[..live].iter().map(|&b| T::from_f64(b / sum)));
            data.extend(std::iter::repeat_n(T::default(), self.cols - live));
        }
        Self::checked("row_softmax", self.rows, self.cols, data)
    }

    /// Places `rhs` to the right of `self`.
    pub fn concat_cols(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::shape(
                "concat_cols",
                format!("{} rows vs {} rows", self.rows, rhs.rows),
            ));
        }
        let cols = self.cols + rhs.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(rhs.row(i));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Copies out the column range `cols`.
    pub fn slice_cols(&self, cols: Range<usize>) -> Result<Self> {
        if cols.start > cols.end || cols.end > self.cols {
            return Err(Error::shape(
                "slice_cols",
                format!("range {cols:?} outside 0..{}", self.cols),
            ));
        }
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[cols.clone()]);
        }
        Ok(Self {
            rows: self.rows,
            cols: cols.len(),
            data,
        })
    }

    fn zip_with(&self, rhs: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| T::from_f64(f(a.to_f64(), b.to_f64())))
            .collect();
        Self::checked(op, self.rows, self.cols, data)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    /// Entrywise product.
    pub fn hadamard(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data = self
            .data
            .iter()
            .map(|x| T::from_f64(f(x.to_f64())))
            .collect();
        Self::checked("map", self.rows, self.cols, data)
    }

    /// Sum of all entries in `f64`.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|x| x.to_f64()).sum()
    }

    /// Reorders rows so that output row `r` is input row `perm[r]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.rows {
            return Err(Error::shape(
                "permute_rows",
                format!(
                    "permutation of length {} for {} rows",
                    perm.len(),
                    self.rows
                ),
            ));
        }
        let mut seen = vec![false; self.rows];
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            if p >= self.rows || std::mem::replace(&mut seen[p], true) {
                return Err(Error::shape("permute_rows", "not a permutation"));
            }
            data.extend_from_slice(self.row(p));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Overwrites every entry from an `f64` generator, keeping the allocation.
    pub(crate) fn refill(
        &mut self,
        op: &'static str,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<()> {
        let cols = self.cols;
        for (idx, slot) in self.data.iter_mut().enumerate() {
            *slot = T::from_f64(f(idx / cols, idx % cols));
        }
        match first_non_finite(cols, &self.data) {
            Some((row, col)) => Err(Error::NonFinite { op, row, col }),
            None => Ok(()),
        }
    }
}

#[inline]
pub(crate) fn dot_f64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.to_f64() * y.to_f64())
        .fold(0.0, |s, v| s + v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Vec<f64> {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out[i * b.cols() + j] = s;
            }
        }
        out
    }

    #[test]
    fn identity_times_m_is_m() {
        let m = Matrix::<f64>::random_fill(3, 3, 7, Fill::StandardNormal);
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn small_hand_product() {
        let a = Matrix::<f64>::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = Matrix::<f64>::from_rows(&[&[0.0], &[1.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = Matrix::<f64>::random_fill(8, 5, 1, Fill::StandardNormal);
        let b = Matrix::<f64>::random_fill(5, 8, 2, Fill::StandardNormal);
        let got = a.matmul(&b).unwrap();
        for (x, y) in got.as_slice().iter().zip(naive_matmul(&a, &b)) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300), "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_nt_agrees_with_explicit_transpose() {
        let a = Matrix::<f64>::random_fill(6, 4, 3, Fill::StandardNormal);
        let b = Matrix::<f64>::random_fill(7, 4, 4, Fill::StandardNormal);
        assert_eq!(a.matmul_nt(&b).unwrap(), a.matmul(&b.transpose()).unwrap());
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Shape { .. })));
    }

    #[test]
    fn matmul_overflow_is_an_error() {
        let a = Matrix::<f32>::from_rows(&[&[1e30, 1e30]]).unwrap();
        let b = Matrix::<f32>::from_rows(&[&[1e30], &[1e30]]).unwrap();
        assert!(matches!(a.matmul(&b), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let s = Matrix::<f64>::zeros(1, 3).row_softmax().unwrap();
        for &x in s.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_entries_closed_form() {
        for &(x, c) in &[(0.0, 1.0), (-50.0, 2.5), (300.0, -0.75)] {
            let s = Matrix::<f64>::from_rows(&[&[x, x + c]])
                .unwrap()
                .row_softmax()
                .unwrap();
            let e = f64::exp(c);
            assert!((s.get(0, 0) - 1.0 / (1.0 + e)).abs() < 1e-15);
            assert!((s.get(0, 1) - e / (1.0 + e)).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let s = Matrix::<f64>::from_rows(&[&[1000.0, 0.0]])
            .unwrap()
            .row_softmax()
            .unwrap();
        assert_eq!(s.get(0, 0), 1.0);
        assert!(s.get(0, 1) < 1e-300);
        let s32 = Matrix::<f32>::from_rows(&[&[1000.0, 0.0]])
            .unwrap()
            .row_softmax()
            .unwrap();
        assert_eq!(s32.get(0, 0), 1.0);
    }

    #[test]
    fn causal_softmax_zeroes_future() {
        let m = Matrix::<f64>::random_fill(4, 4, 9, Fill::StandardNormal);
        let s = m.row_softmax_masked(true).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_eq!(s.get(i, j), 0.0);
            }
            let sum: f64 = s.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-15);
        }
        assert_eq!(s.get(0, 0), 1.0);
    }

    #[test]
    fn concat_shapes_and_neutral_element() {
        let q = Matrix::<f64>::random_fill(5, 3, 1, Fill::StandardNormal);
        let eta = Matrix::<f64>::random_fill(5, 2, 2, Fill::StandardNormal);
        assert_eq!(q.concat_cols(&eta).unwrap().shape(), (5, 5));
        assert_eq!(q.concat_cols(&Matrix::zeros(5, 0)).unwrap(), q);
        assert!(matches!(
            q.concat_cols(&Matrix::zeros(4, 2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn random_fill_is_deterministic() {
        let a = Matrix::<f64>::random_fill(4, 4, 11, Fill::UniformSymmetric);
        assert_eq!(a, Matrix::random_fill(4, 4, 11, Fill::UniformSymmetric));
        assert_ne!(a, Matrix::random_fill(4, 4, 12, Fill::UniformSymmetric));
        assert!(a.as_slice().iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn normal_fill_mean_near_zero() {
        let a = Matrix::<f64>::random_fill(100, 100, 5, Fill::StandardNormal);
        let mean = a.sum() / a.len() as f64;
        assert!(mean.abs() < 0.05, "sample mean {mean}");
    }

    #[test]
    fn new_rejects_non_finite_and_bad_length() {
        assert!(matches!(
            Matrix::<f64>::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            Matrix::<f64>::new(2, 2, vec![1.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn permute_rows_rejects_non_permutations() {
        let m = Matrix::<f64>::zeros(3, 1);
        assert!(m.permute_rows(&[0, 0, 1]).is_err());
        assert!(m.permute_rows(&[0, 1]).is_err());
        assert!(m.permute_rows(&[2, 0, 1]).is_ok());
    }

    #[test]
    fn width_parse() {
        assert_eq!("f32".parse::<Width>(), Ok(Width::F32));
        assert_eq!("double".parse::<Width>(), Ok(Width::F64));
        assert!("f16".parse::<Width>().is_err());
    }
}
