use crate::dataset::ClientProfile;
use crate::linalg::{DenseMatrix, DiagonalVector};

/// A client's normalized row `A⁽ᵘ⁾ = d_u^{-α} R⁽ᵘ⁾ V^{α-1}`, kept sparse.
///
/// Stacking these rows gives the normalized interaction matrix, so
/// `Σ_u A⁽ᵘ⁾ᵀ A⁽ᵘ⁾` is the normalized item-item matrix for any `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientOperator {
    n_items: usize,
    items: Vec<usize>,
    values: Vec<f64>,
}

pub fn client_local_matrix(profile: &ClientProfile, degrees: &DiagonalVector, alpha: f64) -> ClientOperator {
    let user_scale = (profile.degree() as f64).powf(-alpha);
    let values = profile
        .items
        .iter()
        .map(|&i| {
            let v = degrees[i];
            if v > 0.0 {
                user_scale * v.powf(alpha - 1.0)
            } else {
                0.0
            }
        })
        .collect();
    ClientOperator {
        n_items: degrees.len(),
        items: profile.items.clone(),
        values,
    }
}

impl ClientOperator {
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Nonzero entries as `(item, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.items.iter().copied().zip(self.values.iter().copied())
    }

    /// `A x` for an item-space matrix `x` (`n_items x p`), a `1 x p` row.
    pub fn apply(&self, x: &DenseMatrix) -> Vec<f64> {
        assert_eq!(x.rows(), self.n_items);
        let mut out = vec![0.0; x.cols()];
        for (i, a) in self.entries() {
            for (o, xv) in out.iter_mut().zip(x.row(i)) {
                *o += a * xv;
            }
        }
        out
    }

    /// `Aᵀ z` for a `1 x p` row `z`: an `n_items x p` matrix, row-major.
    pub fn transpose_apply(&self, z: &[f64]) -> Vec<f64> {
        let p = z.len();
        let mut out = vec![0.0; self.n_items * p];
        for (i, a) in self.entries() {
            for (o, zv) in out[i * p..(i + 1) * p].iter_mut().zip(z) {
                *o = a * zv;
            }
        }
        out
    }

    /// `Aᵀ A x`, row-major `n_items x p`.
    pub fn gram_apply(&self, x: &DenseMatrix) -> Vec<f64> {
        self.transpose_apply(&self.apply(x))
    }

    /// `AᵀA` flattened row-major, `n_items²` entries, touching only the
    /// support.
    pub fn outer_product(&self) -> Vec<f64> {
        let n = self.n_items;
        let mut out = vec![0.0; n * n];
        for (i, a) in self.entries() {
            for (j, b) in self.entries() {
                out[i * n + j] = a * b;
            }
        }
        out
    }
}
