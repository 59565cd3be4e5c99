//! Dense matrix primitives used by the aggregation protocols.
//!
//! Everything here works on small-to-medium row-major `f64` matrices. The
//! protocols never need sparse factorizations: client rows are sparse, but
//! every aggregate the server touches is dense.

mod oracle;
mod qr;

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub use oracle::{max_principal_angle, svd_oracle, SvdOracle};
pub use qr::{cholesky_upper, gram_schmidt_qr, solve_upper_right, QrFactors, RANK_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is rank deficient: column {column} has residual norm {norm:e}")]
    RankDeficient { column: usize, norm: f64 },

    #[error("QR needs cols <= rows, got a {rows}x{cols} matrix")]
    TooWide { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("entry {index} = {value} is outside the domain of x^{exponent}")]
    Domain {
        index: usize,
        value: f64,
        exponent: f64,
    },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("jacobi SVD did not converge after {0} sweeps")]
    NoConvergence(usize),
}

/// Row-major dense matrix of finite `f64` values.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite(index));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally sized rows.
    ///
    /// Panics if the rows are ragged; intended for literals in tests and
    /// fixtures.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols, |i, j| columns[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Keeps the leading `count` columns.
    pub fn leading_columns(&self, count: usize) -> Self {
        assert!(count <= self.cols);
        Self::from_fn(self.rows, count, |i, j| self[(i, j)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.rows != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "({}x{})ᵀ * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let rhs = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{:?} - {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `diag(left) · self · diag(right)`.
    pub fn scale_rows_cols(&self, left: &DiagonalVector, right: &DiagonalVector) -> Self {
        assert_eq!(left.len(), self.rows);
        assert_eq!(right.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| {
            left[i] * self[(i, j)] * right[j]
        })
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

/// Diagonal matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagonalVector(Vec<f64>);

impl DiagonalVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Index<usize> for DiagonalVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for DiagonalVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// How `diag_power` treats zero entries. Only clamping is supported: a zero
/// degree stays zero for every exponent instead of turning into infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroPolicy {
    #[default]
    ClampZero,
}

/// Raises every diagonal entry to `exponent`, mapping zeros to zero.
pub fn diag_power(
    d: &DiagonalVector,
    exponent: f64,
    zero_policy: ZeroPolicy,
) -> Result<DiagonalVector, LinalgError> {
    let ZeroPolicy::ClampZero = zero_policy;
    d.values()
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if !value.is_finite() {
                Err(LinalgError::NonFinite(index))
            } else if value < 0.0 {
                Err(LinalgError::Domain {
                    index,
                    value,
                    exponent,
                })
            } else if value == 0.0 {
                Ok(0.0)
            } else {
                Ok(value.powf(exponent))
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(DiagonalVector)
}

/// Entrywise `P^{∘s}`.
///
/// Negative entries are only accepted for integral exponents. Zero entries
/// with a negative exponent are rejected since the result would be infinite.
pub fn elementwise_power(p: &DenseMatrix, s: f64) -> Result<DenseMatrix, LinalgError> {
    let integral = s.fract() == 0.0 && s.abs() <= i32::MAX as f64;
    let mut data = Vec::with_capacity(p.data.len());
    for (index, &value) in p.data.iter().enumerate() {
        let out = if (value < 0.0 && !integral) || (value == 0.0 && s < 0.0) {
            return Err(LinalgError::Domain {
                index,
                value,
                exponent: s,
            });
        } else if s == 1.0 {
            value
        } else if integral {
            value.powi(s as i32)
        } else {
            value.powf(s)
        };
        data.push(out);
    }
    DenseMatrix::from_vec(p.rows, p.cols, data)
}

/// `rows x cols` matrix of i.i.d. standard normal samples.
///
/// Samples come from `rand_distr::StandardNormal` (ziggurat) driven by a
/// ChaCha20 stream seeded with `seed_from_u64(seed)`, filled row-major.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    DenseMatrix { rows, cols, data }
}
