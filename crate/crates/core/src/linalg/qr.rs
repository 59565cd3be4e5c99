use super::{DenseMatrix, LinalgError};

/// Residual column norms below this (absolute, or relative to the input
/// column) are reported as rank deficiency.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Thin QR factors `Y = X T`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactors {
    /// `rows x cols`, orthonormal columns.
    pub x: DenseMatrix,
    /// `cols x cols`, upper triangular with non-negative diagonal.
    pub t: DenseMatrix,
}

/// Modified Gram-Schmidt QR with one reorthogonalization pass.
///
/// The diagonal of `T` is the residual norm of each column, so it is never
/// negative and the factorization is unique for full-rank input.
pub fn gram_schmidt_qr(y: &DenseMatrix) -> Result<QrFactors, LinalgError> {
    let (rows, cols) = y.shape();
    if cols > rows {
        return Err(LinalgError::TooWide { rows, cols });
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut t = DenseMatrix::zeros(cols, cols);

    for j in 0..cols {
        let mut v = y.column(j);
        let input_norm = norm(&v);
        // The second sweep picks up what the first one lost to cancellation.
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let r = dot(q, &v);
                t[(i, j)] += r;
                for (vk, qk) in v.iter_mut().zip(q) {
                    *vk -= r * qk;
                }
            }
        }
        let residual = norm(&v);
        if !(residual >= RANK_TOLERANCE.max(RANK_TOLERANCE * input_norm)) {
            return Err(LinalgError::RankDeficient {
                column: j,
                norm: residual,
            });
        }
        t[(j, j)] = residual;
        v.iter_mut().for_each(|vk| *vk /= residual);
        basis.push(v);
    }

    Ok(QrFactors {
        x: DenseMatrix::from_columns(&basis),
        t,
    })
}

/// Upper-triangular `R` with `C = RᵀR` for a symmetric positive definite
/// `C`. A pivot at or below [`RANK_TOLERANCE`] times the largest diagonal
/// entry is reported as rank deficiency.
pub fn cholesky_upper(c: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let n = c.rows();
    if c.cols() != n {
        return Err(LinalgError::DimensionMismatch(format!("cholesky of a {n}x{} matrix", c.cols())));
    }
    let scale = (0..n).map(|i| c[(i, i)].abs()).fold(0.0, f64::max);
    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let pivot = c[(j, j)] - (0..j).map(|k| r[(k, j)] * r[(k, j)]).sum::<f64>();
        if !(pivot > RANK_TOLERANCE * scale) {
            return Err(LinalgError::RankDeficient {
                column: j,
                norm: pivot.max(0.0).sqrt(),
            });
        }
        let d = pivot.sqrt();
        r[(j, j)] = d;
        for i in j + 1..n {
            let off = c[(j, i)] - (0..j).map(|k| r[(k, j)] * r[(k, i)]).sum::<f64>();
            r[(j, i)] = off / d;
        }
    }
    Ok(r)
}

/// Solves `w R = z` for a row vector `w`, `R` upper triangular.
pub fn solve_upper_right(z: &[f64], r: &DenseMatrix) -> Vec<f64> {
    let n = z.len();
    let mut w = vec![0.0; n];
    for j in 0..n {
        let acc: f64 = (0..j).map(|i| w[i] * r[(i, j)]).sum();
        w[j] = (z[j] - acc) / r[(j, j)];
    }
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
