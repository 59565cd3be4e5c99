//! The individual aggregation steps shared by both protocol variants.

use crate::dataset::ClientProfile;
use crate::linalg::{
    cholesky_upper, diag_power, gaussian_matrix, gram_schmidt_qr, solve_upper_right, DenseMatrix, DiagonalVector,
    ZeroPolicy,
};
use crate::secagg::SecureAggregator;

use super::client::{client_local_matrix, ClientOperator};
use super::{ProtocolConfig, ProtocolError};

/// Orthonormal iterate and triangular factor of the final power-method QR.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMethodOutput {
    /// `n_items x rank`, orthonormal columns.
    pub x: DenseMatrix,
    /// `rank x rank`, upper triangular.
    pub t: DenseMatrix,
}

/// Item degrees `V` from one aggregation of the clients' indicator rows.
/// The result is broadcast since clients need it to normalize.
pub fn compute_item_degrees(
    clients: &[ClientProfile],
    n_items: usize,
    agg: &mut SecureAggregator,
) -> Result<DiagonalVector, ProtocolError> {
    check_participants(clients, agg)?;
    let sums = agg.secure_sum("item-degrees", n_items, |u| {
        let mut row = vec![0.0; n_items];
        for &i in &clients[u].items {
            row[i] = 1.0;
        }
        row
    })?;
    agg.ledger_mut().charge_broadcast("item-degrees", n_items);
    // Degrees are integers, so the decoded sums are exact.
    Ok(DiagonalVector::new(sums.into_iter().map(f64::round).collect()))
}

/// Normalized item-item matrix from one aggregation of weighted outer
/// products `d_u^{-2α} R⁽ᵘ⁾ᵀ R⁽ᵘ⁾`, rescaled by `V^{α-1}` on both sides.
pub fn compute_gram_matrix(
    clients: &[ClientProfile],
    degrees: &DiagonalVector,
    alpha: f64,
    agg: &mut SecureAggregator,
) -> Result<DenseMatrix, ProtocolError> {
    check_participants(clients, agg)?;
    let n = degrees.len();
    let sums = agg.secure_sum("gram", n * n, |u| {
        let profile = &clients[u];
        let weight = (profile.degree() as f64).powf(-2.0 * alpha);
        let mut out = vec![0.0; n * n];
        for &i in &profile.items {
            for &j in &profile.items {
                out[i * n + j] = weight;
            }
        }
        out
    })?;
    let scale = diag_power(degrees, alpha - 1.0, ZeroPolicy::ClampZero)?;
    Ok(DenseMatrix::from_vec(n, n, sums)?.scale_rows_cols(&scale, &scale))
}

/// Randomized power iteration on the clients' stacked normalized rows.
///
/// The server orthonormalizes a Gaussian sketch `G₀` (`n_clients x rank`)
/// and hands client `u` its row; the first aggregation yields `Ãᵀ X₀`.
/// Every later round aggregates `A⁽ᵘ⁾ᵀ A⁽ᵘ⁾ X` and re-orthonormalizes with a
/// single QR. Returns the last iterate and its triangular factor.
pub fn distributed_power_method(
    clients: &[ClientProfile],
    degrees: &DiagonalVector,
    config: &ProtocolConfig,
    agg: &mut SecureAggregator,
) -> Result<PowerMethodOutput, ProtocolError> {
    check_participants(clients, agg)?;
    let n_items = degrees.len();
    let rank = config.rank;
    config.validate(n_items, clients.len())?;

    let operators: Vec<ClientOperator> = clients
        .iter()
        .map(|c| client_local_matrix(c, degrees, config.alpha))
        .collect();

    let sketch = gram_schmidt_qr(&gaussian_matrix(clients.len(), rank, config.seed))?;
    agg.ledger_mut().charge_broadcast("sketch-row", rank);
    let y = agg.secure_sum("power-0", n_items * rank, |u| {
        operators[u].transpose_apply(sketch.x.row(u))
    })?;
    let mut qr = gram_schmidt_qr(&DenseMatrix::from_vec(n_items, rank, y)?)?;

    for step in 1..config.iterations {
        agg.ledger_mut().charge_broadcast("iterate", n_items * rank);
        let x = &qr.x;
        let y = if config.two_qr {
            two_qr_step(&operators, x, step, agg)?
        } else {
            agg.secure_sum(&format!("power-{step}"), n_items * rank, |u| operators[u].gram_apply(x))?
        };
        qr = gram_schmidt_qr(&DenseMatrix::from_vec(n_items, rank, y)?)?;
    }
    Ok(PowerMethodOutput { x: qr.x, t: qr.t })
}

/// Orthonormalizes the intermediate `Ã X` before the second product.
///
/// `Ã X` is spread across clients one row each, so it is normalized through
/// its aggregated `rank x rank` Gram matrix and a Cholesky factor that the
/// server broadcasts back.
fn two_qr_step(
    operators: &[ClientOperator],
    x: &DenseMatrix,
    step: usize,
    agg: &mut SecureAggregator,
) -> Result<Vec<f64>, ProtocolError> {
    let rank = x.cols();
    let gram = agg.secure_sum(&format!("power-{step}-inner"), rank * rank, |u| {
        let z = operators[u].apply(x);
        z.iter().flat_map(|a| z.iter().map(move |b| a * b)).collect()
    })?;
    let r = cholesky_upper(&DenseMatrix::from_vec(rank, rank, gram)?)?;
    agg.ledger_mut().charge_broadcast("inner-factor", rank * rank);
    let y = agg.secure_sum(&format!("power-{step}"), x.rows() * rank, |u| {
        let op = &operators[u];
        op.transpose_apply(&solve_upper_right(&op.apply(x), &r))
    })?;
    Ok(y)
}

fn check_participants(clients: &[ClientProfile], agg: &SecureAggregator) -> Result<(), ProtocolError> {
    if clients.is_empty() {
        return Err(ProtocolError::Config("no clients".into()));
    }
    if clients.len() != agg.participants() {
        return Err(ProtocolError::Config(format!(
            "{} clients but the aggregator was set up for {}",
            clients.len(),
            agg.participants()
        )));
    }
    Ok(())
}
