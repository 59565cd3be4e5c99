//! Brute-force SVD used to check the power method in tests.
//!
//! One-sided (Hestenes) Jacobi: rotate column pairs of `A` until they are
//! mutually orthogonal. The accumulated rotations are the right singular
//! vectors. This is O(sweeps · n² · m) and meant for matrices up to a few
//! hundred columns.

use super::{DenseMatrix, LinalgError};

const MAX_SWEEPS: usize = 80;
const ORTHOGONALITY_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct SvdOracle {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `cols x cols`; column `i` pairs with `singular_values[i]`.
    pub right_vectors: DenseMatrix,
    /// `rows x cols`; columns with a zero singular value are left zero.
    pub left_vectors: DenseMatrix,
}

impl SvdOracle {
    /// `U Σ Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, n) = self.left_vectors.shape();
        let mut us = self.left_vectors.clone();
        for i in 0..m {
            for j in 0..n {
                us[(i, j)] *= self.singular_values[j];
            }
        }
        us.matmul(&self.right_vectors.transpose())
            .expect("shapes agree by construction")
    }

    /// Leading `k` right singular vectors as columns.
    pub fn top_right(&self, k: usize) -> DenseMatrix {
        self.right_vectors.leading_columns(k)
    }
}

pub fn svd_oracle(a: &DenseMatrix) -> Result<SvdOracle, LinalgError> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= ORTHOGONALITY_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<(f64, usize)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (c.iter().map(|x| x * x).sum::<f64>().sqrt(), j))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let singular_values: Vec<f64> = order.iter().map(|&(s, _)| s).collect();
    let right_vectors = DenseMatrix::from_fn(n, n, |i, k| v[order[k].1][i]);
    let left_vectors = DenseMatrix::from_fn(m, n, |i, k| {
        let (sigma, j) = order[k];
        if sigma > 0.0 {
            cols[j][i] / sigma
        } else {
            0.0
        }
    });
    Ok(SvdOracle {
        singular_values,
        right_vectors,
        left_vectors,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    for (x, y) in head[p].iter_mut().zip(tail[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Largest principal angle (radians) between the column spans of two
/// matrices with orthonormal columns.
///
/// Computed as `asin(σ_max((I − B Bᵀ) A))`, which stays accurate for tiny
/// angles where `acos` of the cosines would not.
pub fn max_principal_angle(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64, LinalgError> {
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "subspaces in R^{} and R^{}",
            a.rows(),
            b.rows()
        )));
    }
    let coeffs = b.t_matmul(a)?;
    let residual = a.sub(&b.matmul(&coeffs)?)?;
    let svd = svd_oracle(&residual)?;
    let sine = svd.singular_values.first().copied().unwrap_or(0.0);
    Ok(sine.min(1.0).asin())
}
