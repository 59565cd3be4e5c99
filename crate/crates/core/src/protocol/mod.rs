//! PriviRec and PriviRec-k over simulated clients.
//!
//! Both variants start with one aggregation of item degrees. PriviRec then
//! aggregates the full normalized item-item matrix and runs the distributed
//! power method for the low-pass filter. PriviRec-k skips the `|I|²` round
//! and approximates the item-item matrix from the power method's own output
//! as `S_k Diag(T) S_kᵀ`.

mod client;
mod filters;
mod rounds;

use thiserror::Error;

use crate::dataset::ClientProfile;
use crate::linalg::{DiagonalVector, LinalgError};
use crate::secagg::{FixedPointCodec, RunShape, SecAggError, SecureAggregator, DEFAULT_DEGREE_FACTOR, DEFAULT_FRACTION_BITS};

pub use client::{client_local_matrix, ClientOperator};
pub use filters::{ideal_low_pass, FilterSet, Gram, LowPassFilter};
pub use rounds::{compute_gram_matrix, compute_item_degrees, distributed_power_method, PowerMethodOutput};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    SecAgg(#[from] SecAggError),

    #[error(transparent)]
    Linalg(LinalgError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("power-method iterate lost rank at column {column}; try a smaller rank or another seed")]
    RankDeficient { column: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("filter container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<LinalgError> for ProtocolError {
    fn from(err: LinalgError) -> Self {
        match err {
            LinalgError::RankDeficient { column, .. } => ProtocolError::RankDeficient { column },
            other => ProtocolError::Linalg(other),
        }
    }
}

/// Dense `|I|²` buffers larger than this are refused by default.
pub const DEFAULT_DENSE_BUDGET_BYTES: usize = 4 << 30;

/// Relative slack below zero tolerated in `Diag(T)` before it is an error.
pub const LAMBDA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Normalization exponent.
    pub alpha: f64,
    /// Power-method rounds `L`.
    pub iterations: usize,
    /// Iteration width of the power method.
    pub rank: usize,
    /// Columns of the iterate kept for the low-pass filter.
    pub filter_rank: usize,
    /// Weight of the low-pass filter in GF-CF scoring.
    pub gamma: f64,
    pub seed: u64,
    pub fraction_bits: u32,
    /// Mask graph degree is `ceil(degree_factor * log2 n)`.
    pub degree_factor: f64,
    /// Re-orthonormalize between the two products of each round.
    pub two_qr: bool,
    pub dense_budget_bytes: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            iterations: 2,
            rank: 256,
            filter_rank: 256,
            gamma: 0.3,
            seed: 0,
            fraction_bits: DEFAULT_FRACTION_BITS,
            degree_factor: DEFAULT_DEGREE_FACTOR,
            two_qr: false,
            dense_budget_bytes: DEFAULT_DENSE_BUDGET_BYTES,
        }
    }
}

impl ProtocolConfig {
    /// Checks the knobs against an instance of `n_clients` users over
    /// `n_items` items.
    pub fn validate(&self, n_items: usize, n_clients: usize) -> Result<(), ProtocolError> {
        let fail = |msg: String| Err(ProtocolError::Config(msg));
        if !self.alpha.is_finite() {
            return fail(format!("alpha must be finite, got {}", self.alpha));
        }
        if !(self.gamma >= 0.0) {
            return fail(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if self.iterations == 0 {
            return fail("at least one power-method iteration is required".into());
        }
        if self.rank == 0 || self.rank > n_items {
            return fail(format!("rank {} must be in 1..={n_items}", self.rank));
        }
        if self.rank > n_clients {
            return fail(format!(
                "rank {} exceeds the {n_clients} clients that can carry the sketch",
                self.rank
            ));
        }
        if self.filter_rank == 0 || self.filter_rank > self.rank {
            return fail(format!("filter rank {} must be in 1..={}", self.filter_rank, self.rank));
        }
        if !(self.degree_factor > 0.0) {
            return fail(format!("degree factor must be positive, got {}", self.degree_factor));
        }
        Ok(())
    }

    pub fn codec(&self) -> Result<FixedPointCodec, ProtocolError> {
        Ok(FixedPointCodec::new(self.fraction_bits)?)
    }

    /// An aggregator over `n_clients` with this configuration's codec and
    /// mask graph.
    pub fn aggregator(&self, n_clients: usize) -> Result<SecureAggregator, ProtocolError> {
        Ok(SecureAggregator::new(n_clients, self.codec()?, self.degree_factor, self.seed))
    }

    /// Errors if an `n_items x n_items` matrix of `f64` is over budget.
    pub fn check_dense_budget(&self, n_items: usize) -> Result<(), ProtocolError> {
        let bytes = n_items.saturating_mul(n_items).saturating_mul(8);
        if bytes > self.dense_budget_bytes {
            return Err(ProtocolError::Config(format!(
                "a dense {n_items}x{n_items} item matrix needs {bytes} bytes, over the budget of {}; \
                 use the low-rank variant or a smaller instance",
                self.dense_budget_bytes
            )));
        }
        Ok(())
    }
}

/// Full PriviRec: dense item-item matrix plus low-pass filter.
///
/// The aggregator's ledger is moved into the result.
pub fn run_privirec(
    clients: &[ClientProfile],
    n_items: usize,
    config: &ProtocolConfig,
    agg: &mut SecureAggregator,
) -> Result<FilterSet, ProtocolError> {
    config.validate(n_items, clients.len())?;
    config.check_dense_budget(n_items)?;
    let degrees = compute_item_degrees(clients, n_items, agg)?;
    let gram = compute_gram_matrix(clients, &degrees, config.alpha, agg)?;
    let power = distributed_power_method(clients, &degrees, config, agg)?;
    let lowpass = ideal_low_pass(&power.x, &degrees, config.filter_rank)?;
    agg.ledger_mut().charge_broadcast("gram", n_items * n_items);
    agg.ledger_mut().charge_broadcast("lowpass", n_items * config.filter_rank);
    finish(agg, config, "privirec", degrees, Gram::Dense(gram), lowpass)
}

/// PriviRec-k: the item-item matrix is `S_k Diag(T_{L-1}) S_kᵀ`, so no
/// aggregation is longer than `|I| · rank`.
pub fn run_privirec_k(
    clients: &[ClientProfile],
    n_items: usize,
    config: &ProtocolConfig,
    agg: &mut SecureAggregator,
) -> Result<FilterSet, ProtocolError> {
    config.validate(n_items, clients.len())?;
    let degrees = compute_item_degrees(clients, n_items, agg)?;
    let power = distributed_power_method(clients, &degrees, config, agg)?;
    let lambda = clamp_spectrum(&power)?;
    let lowpass = ideal_low_pass(&power.x, &degrees, config.filter_rank)?;
    agg.ledger_mut().charge_broadcast("lowrank-gram", n_items * config.rank + config.rank);
    agg.ledger_mut().charge_broadcast("lowpass", n_items * config.filter_rank);
    let gram = Gram::LowRank {
        basis: power.x,
        lambda,
    };
    finish(agg, config, "privirec-k", degrees, gram, lowpass)
}

fn finish(
    agg: &mut SecureAggregator,
    config: &ProtocolConfig,
    variant: &str,
    item_degrees: DiagonalVector,
    gram: Gram,
    lowpass: LowPassFilter,
) -> Result<FilterSet, ProtocolError> {
    let mut ledger = agg.take_ledger();
    ledger.set_shape(RunShape {
        variant: variant.to_string(),
        n_clients: agg.participants(),
        n_items: item_degrees.len(),
        iterations: config.iterations,
        rank: config.rank,
    });
    log::info!(
        "{variant}: {} secure rounds, mean client bytes {:.0}",
        ledger.secagg_rounds(),
        ledger.mean_client_total()
    );
    Ok(FilterSet {
        item_degrees,
        gram,
        lowpass,
        rank: config.rank,
        fraction_bits: config.fraction_bits,
        ledger,
    })
}

/// `Diag(T)` with small negatives clamped to zero.
fn clamp_spectrum(power: &PowerMethodOutput) -> Result<DiagonalVector, ProtocolError> {
    let t = &power.t;
    let diag: Vec<f64> = (0..t.rows()).map(|i| t[(i, i)]).collect();
    let scale = t.max_abs();
    let mut out = Vec::with_capacity(diag.len());
    for (i, &l) in diag.iter().enumerate() {
        if l >= 0.0 {
            out.push(l);
        } else if l >= -LAMBDA_TOLERANCE * scale {
            out.push(0.0);
        } else {
            return Err(ProtocolError::Numerical(format!(
                "eigenvalue estimate {i} is {l:e}; increase the number of iterations"
            )));
        }
    }
    Ok(DiagonalVector::new(out))
}
