//! Analytic per-client communication cost, in floats, and a check of the
//! prediction against a measured ledger.

use std::fmt;

use thiserror::Error;

use crate::secagg::{CommLedger, ELEMENT_BYTES};

/// Measured/predicted ratios inside this window pass reconciliation.
pub const RECONCILE_WINDOW: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("parameter {0} must be at least 1")]
    Parameter(&'static str),

    #[error("estimate and ledger disagree: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    PriviRec,
    PriviRecK,
    FederatedGcn,
}

impl Variant {
    /// Name used in ledgers and reports.
    pub fn name(self) -> &'static str {
        match self {
            Variant::PriviRec => "privirec",
            Variant::PriviRecK => "privirec-k",
            Variant::FederatedGcn => "federated-gcn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Clients.
    pub n: usize,
    /// Items.
    pub items: usize,
    /// Power-method iterations `L`.
    pub iterations: usize,
    /// Low-pass filter rank.
    pub k1: usize,
    /// PriviRec-k iteration rank.
    pub k2: usize,
    /// Federated embedding width.
    pub k3: usize,
    /// Federated training epochs.
    pub epochs: usize,
}

impl CostParams {
    /// The Gowalla setting used for the worked example.
    pub fn gowalla() -> Self {
        Self {
            n: 29858,
            items: 40981,
            iterations: 3,
            k1: 256,
            k2: 2000,
            k3: 64,
            epochs: 1000,
        }
    }

    fn validate(&self) -> Result<(), CostError> {
        let fields = [
            ("n", self.n),
            ("items", self.items),
            ("iterations", self.iterations),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("epochs", self.epochs),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(CostError::Parameter(name)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimate {
    pub variant: Variant,
    pub params: CostParams,
    /// Key-agreement term, `rounds · log2 n`.
    pub log_term: f64,
    /// Aggregated-payload term.
    pub payload_term: f64,
    pub client_floats: f64,
    pub server_floats: f64,
}

pub fn estimate(variant: Variant, params: &CostParams) -> Result<CostEstimate, CostError> {
    params.validate()?;
    let n = params.n as f64;
    let items = params.items as f64;
    let l = params.iterations as f64;
    let log_n = n.log2();
    let (log_term, payload_term) = match variant {
        Variant::PriviRec => (l * log_n, items * items),
        Variant::PriviRecK => (l * log_n, l * params.k2 as f64 * items),
        Variant::FederatedGcn => {
            let e = params.epochs as f64;
            (e * log_n, e * params.k3 as f64 * (items + n))
        }
    };
    let client = log_term + payload_term;
    Ok(CostEstimate {
        variant,
        params: *params,
        log_term,
        payload_term,
        client_floats: client,
        server_floats: n * client,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconciliation {
    pub variant: Variant,
    pub predicted_bytes: f64,
    /// Mean bytes sent per client, all traffic.
    pub measured_bytes: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl fmt::Display for Reconciliation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: predicted {:.0} B, measured {:.0} B, ratio {:.3} -> {}",
            self.variant,
            self.predicted_bytes,
            self.measured_bytes,
            self.ratio,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Compares the estimate with the mean bytes each client sent in a run.
///
/// A ledger with no aggregation rounds is a failed reconciliation, not an
/// error. A ledger whose recorded shape differs from the estimate's
/// parameters is an error.
pub fn reconcile(estimate: &CostEstimate, ledger: &CommLedger, bytes_per_float: u64) -> Result<Reconciliation, CostError> {
    let predicted = estimate.client_floats * bytes_per_float as f64;
    let report = |measured: f64| {
        let ratio = if predicted > 0.0 { measured / predicted } else { f64::INFINITY };
        Reconciliation {
            variant: estimate.variant,
            predicted_bytes: predicted,
            measured_bytes: measured,
            ratio,
            pass: (RECONCILE_WINDOW.0..=RECONCILE_WINDOW.1).contains(&ratio),
        }
    };
    if ledger.secagg_rounds() == 0 {
        return Ok(report(0.0));
    }

    let shape = ledger
        .shape()
        .ok_or_else(|| CostError::Mismatch("ledger carries no run parameters".into()))?;
    let p = &estimate.params;
    let mut problems = Vec::new();
    if shape.variant != estimate.variant.name() {
        problems.push(format!("variant {} vs {}", shape.variant, estimate.variant));
    }
    if shape.n_clients != p.n {
        problems.push(format!("n {} vs {}", shape.n_clients, p.n));
    }
    if shape.n_items != p.items {
        problems.push(format!("items {} vs {}", shape.n_items, p.items));
    }
    if shape.iterations != p.iterations {
        problems.push(format!("iterations {} vs {}", shape.iterations, p.iterations));
    }
    if estimate.variant == Variant::PriviRecK && shape.rank != p.k2 {
        problems.push(format!("rank {} vs k2 {}", shape.rank, p.k2));
    }
    if !problems.is_empty() {
        return Err(CostError::Mismatch(problems.join(", ")));
    }
    Ok(report(ledger.mean_client_sent(None)))
}

/// [`reconcile`] with 8-byte floats, matching the ledger's element size.
pub fn reconcile_default(estimate: &CostEstimate, ledger: &CommLedger) -> Result<Reconciliation, CostError> {
    reconcile(estimate, ledger, ELEMENT_BYTES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secagg::RunShape;

    fn within(actual: f64, quoted: f64, rel: f64) -> bool {
        ((actual - quoted) / quoted).abs() <= rel
    }

    #[test]
    fn gowalla_worked_example() {
        let p = CostParams::gowalla();
        let a = estimate(Variant::PriviRec, &p).unwrap();
        let b = estimate(Variant::PriviRecK, &p).unwrap();
        let c = estimate(Variant::FederatedGcn, &p).unwrap();
        assert!(within(a.client_floats, 1.679e9, 0.005), "{}", a.client_floats);
        assert!(within(b.client_floats, 2.459e8, 0.005), "{}", b.client_floats);
        assert!(within(c.client_floats, 4.534e9, 0.005), "{}", c.client_floats);
        assert_eq!(a.server_floats, 29858.0 * a.client_floats);
    }

    #[test]
    fn zero_parameter_is_rejected() {
        let p = CostParams { k2: 0, ..CostParams::gowalla() };
        assert_eq!(estimate(Variant::PriviRecK, &p), Err(CostError::Parameter("k2")));
    }

    #[test]
    fn empty_ledger_fails() {
        let est = estimate(Variant::PriviRec, &CostParams::gowalla()).unwrap();
        let r = reconcile_default(&est, &CommLedger::new(3)).unwrap();
        assert!(!r.pass);
        assert_eq!(r.measured_bytes, 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = CostParams {
            n: 4,
            items: 8,
            iterations: 2,
            k1: 2,
            k2: 2,
            k3: 1,
            epochs: 1,
        };
        let est = estimate(Variant::PriviRec, &p).unwrap();
        let mut ledger = CommLedger::new(4);
        ledger.charge_key_exchange(0, 2);
        ledger.charge_payloads("x", 0, &[0, 1, 2, 3], 8, 84);
        ledger.set_shape(RunShape {
            variant: "privirec".into(),
            n_clients: 4,
            n_items: 9,
            iterations: 2,
            rank: 2,
        });
        assert!(matches!(reconcile_default(&est, &ledger), Err(CostError::Mismatch(_))));
    }
}
