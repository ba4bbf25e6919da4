use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
///
/// `data[i * cols + j]` holds entry `(i, j)`. Constructors reject empty
/// shapes and non-finite entries.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                write!(f, "{:>12.5e} ", self.get(i, j))?;
            }
            if self.cols > 8 {
                write!(f, "...")?;
            }
            writeln!(f)?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidData(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidData(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices. Panics on ragged or empty input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty(), "empty matrix");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "row {i} has {} entries, expected {cols}", r.len());
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data).expect("finite entries")
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty shape");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty shape");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::eye(n, n)
    }

    /// `rows x cols` matrix with ones on the main diagonal.
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m.data[i * cols + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
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

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of the columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> DenseMatrix {
        assert!(start < end && end <= self.cols);
        DenseMatrix::from_fn(self.rows, end - start, |i, j| self.get(i, start + j))
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            let row = self.row(i);
            for (j, &v) in row.iter().enumerate() {
                out[j * self.rows + i] = v;
            }
        }
        DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn scale_mut(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    fn check_same_shape(&self, other: &DenseMatrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.lin_comb(1.0, other, -1.0)
    }

    /// `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: f64, other: &DenseMatrix, beta: f64) -> Result<DenseMatrix> {
        self.check_same_shape(other, "lin_comb")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseMatrix) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Adds `alpha` to every diagonal entry.
    pub fn add_diag(&mut self, alpha: f64) {
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += alpha;
        }
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &DenseMatrix) -> Result<f64> {
        self.check_same_shape(other, "inner")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius distance `||self - other||`.
    pub fn distance(&self, other: &DenseMatrix) -> Result<f64> {
        self.check_same_shape(other, "distance")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        matmul(self, other)
    }
}

/// Frobenius norm of a matrix.
pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    m.frobenius_norm()
}

// Block sizes for the product kernels. Each output entry always accumulates
// its k-terms in ascending order starting from 0.0, so the result is
// bit-identical to the textbook triple loop.
const NC: usize = 256;
const KC: usize = 256;

/// Strided read-only view of the left operand.
#[derive(Clone, Copy)]
struct LeftView<'a> {
    data: &'a [f64],
    row_stride: usize,
    col_stride: usize,
}

impl LeftView<'_> {
    #[inline(always)]
    fn at(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.row_stride + k * self.col_stride]
    }
}

/// `c (m x n) = a (m x k) * b (k x n)` with `b` row-major and contiguous.
fn gemm(a: LeftView<'_>, b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    c.iter_mut().for_each(|v| *v = 0.0);
    for jb in (0..n).step_by(NC) {
        let je = (jb + NC).min(n);
        for kb in (0..k).step_by(KC) {
            let ke = (kb + KC).min(k);
            let mut i = 0;
            while i + 4 <= m {
                let block = &mut c[i * n..(i + 4) * n];
                let (r0, rest) = block.split_at_mut(n);
                let (r1, rest) = rest.split_at_mut(n);
                let (r2, r3) = rest.split_at_mut(n);
                let (r0, r1, r2, r3) = (&mut r0[jb..je], &mut r1[jb..je], &mut r2[jb..je], &mut r3[jb..je]);
                for kk in kb..ke {
                    let brow = &b[kk * n + jb..kk * n + je];
                    let (a0, a1, a2, a3) = (a.at(i, kk), a.at(i + 1, kk), a.at(i + 2, kk), a.at(i + 3, kk));
                    for ((((c0, c1), c2), c3), &bv) in r0
                        .iter_mut()
                        .zip(r1.iter_mut())
                        .zip(r2.iter_mut())
                        .zip(r3.iter_mut())
                        .zip(brow)
                    {
                        *c0 += a0 * bv;
                        *c1 += a1 * bv;
                        *c2 += a2 * bv;
                        *c3 += a3 * bv;
                    }
                }
                i += 4;
            }
            while i < m {
                let r = &mut c[i * n + jb..i * n + je];
                for kk in kb..ke {
                    let brow = &b[kk * n + jb..kk * n + je];
                    let av = a.at(i, kk);
                    for (cv, &bv) in r.iter_mut().zip(brow) {
                        *cv += av * bv;
                    }
                }
                i += 1;
            }
        }
    }
}

/// Matrix product `a * b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    let view = LeftView {
        data: &a.data,
        row_stride: k,
        col_stride: 1,
    };
    gemm(view, &b.data, &mut out, m, k, n);
    Ok(DenseMatrix {
        rows: m,
        cols: n,
        data: out,
    })
}

/// Product `aᵀ * b` without forming the transpose.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, k, n) = (a.cols, a.rows, b.cols);
    let mut out = vec![0.0; m * n];
    let view = LeftView {
        data: &a.data,
        row_stride: 1,
        col_stride: m,
    };
    gemm(view, &b.data, &mut out, m, k, n);
    Ok(DenseMatrix {
        rows: m,
        cols: n,
        data: out,
    })
}

/// Product `a * bᵀ`.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(Error::DimensionMismatch {
            op: "matmul_nt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    matmul(a, &b.transpose())
}

/// Gram matrix `xᵀ x`. Exactly symmetric.
pub fn gram(x: &DenseMatrix) -> DenseMatrix {
    matmul_tn(x, x).expect("gram shapes agree")
}

fn require_square(m: &DenseMatrix, op: &'static str) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            op,
            rows: m.rows,
            cols: m.cols,
        });
    }
    Ok(m.rows)
}

/// `½(M − Mᵀ)`.
pub fn skew_part(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = require_square(m, "skew_part")?;
    Ok(DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) - m.get(j, i))))
}

/// `½(M + Mᵀ)`.
pub fn sym_part(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = require_square(m, "sym_part")?;
    Ok(DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i))))
}
