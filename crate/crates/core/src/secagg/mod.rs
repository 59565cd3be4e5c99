//! Dropout-free secure aggregation.
//!
//! Clients encode their vectors into Z/2^64 with a fixed-point codec and add
//! pairwise masks shared with their neighbors in a [`MaskGraph`]. Each pair
//! adds and subtracts the same keystream, so the server's ring sum over all
//! clients equals the sum of the plain encodings while every individual
//! payload looks uniformly random. The participant set is fixed: a missing
//! message aborts the round.

mod codec;
mod graph;
mod ledger;
mod mask;

use rayon::prelude::*;
use thiserror::Error;

pub use codec::{FixedPointCodec, DEFAULT_FRACTION_BITS, RING_BITS};
pub use graph::{MaskGraph, PairSeed, DEFAULT_DEGREE_FACTOR};
pub use ledger::{CommLedger, PartyCounters, RunShape, Traffic, TransferRecord, ELEMENT_BYTES, SEED_EXCHANGE_BYTES};
pub use mask::{
    aggregate, mask_contribution, mask_vector, prg_expand, wire_len, Aggregation, MaskedMessage, RoundSpec,
    HEADER_BYTES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SecAggError {
    #[error("value {value} at index {index} would overflow the aggregation ring")]
    Overflow { index: usize, value: f64 },

    #[error("sender {sender} sent {got} elements, round declared {expected}")]
    LengthMismatch {
        sender: usize,
        expected: usize,
        got: usize,
    },

    #[error("message for round {got} delivered to round {expected}")]
    RoundMismatch { expected: u64, got: u64 },

    #[error("no message from participant {0}; dropouts are not supported")]
    MissingSender(usize),

    #[error("participant {0} sent twice in one round")]
    DuplicateSender(usize),

    #[error("sender {0} is not a participant")]
    UnknownSender(usize),

    #[error("malformed message: {0}")]
    Malformed(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Clients masked in parallel per batch before the server folds them in.
const CLIENT_BATCH: usize = 64;

/// Server-side driver for a sequence of aggregation rounds over a fixed set
/// of clients. Owns the mask graph and charges every exchange to a ledger.
#[derive(Debug)]
pub struct SecureAggregator {
    graph: MaskGraph,
    codec: FixedPointCodec,
    ledger: CommLedger,
    next_round: u64,
}

impl SecureAggregator {
    pub fn new(n_clients: usize, codec: FixedPointCodec, degree_factor: f64, seed: u64) -> Self {
        Self {
            graph: MaskGraph::build(n_clients, degree_factor, seed),
            codec,
            ledger: CommLedger::new(n_clients),
            next_round: 0,
        }
    }

    pub fn participants(&self) -> usize {
        self.graph.participants()
    }

    pub fn graph(&self) -> &MaskGraph {
        &self.graph
    }

    pub fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut CommLedger {
        &mut self.ledger
    }

    pub fn take_ledger(&mut self) -> CommLedger {
        let fresh = CommLedger::new(self.participants());
        std::mem::replace(&mut self.ledger, fresh)
    }

    /// Decode tolerance of one round's result, per entry.
    pub fn tolerance(&self) -> f64 {
        self.codec.sum_tolerance(self.participants())
    }

    /// Runs one round: every client `u` masks `contribution(u)`, the server
    /// sums the masked messages and decodes.
    pub fn secure_sum<F>(&mut self, label: &str, length: usize, contribution: F) -> Result<Vec<f64>, SecAggError>
    where
        F: Fn(usize) -> Vec<f64> + Sync,
    {
        let n = self.participants();
        let round = RoundSpec {
            round_id: self.next_round,
            length,
        };
        self.next_round += 1;

        let mut agg = Aggregation::new(round, n);
        for start in (0..n).step_by(CLIENT_BATCH) {
            let end = (start + CLIENT_BATCH).min(n);
            let batch: Vec<MaskedMessage> = (start..end)
                .into_par_iter()
                .map(|u| mask_contribution(&contribution(u), u, &round, &self.graph, &self.codec))
                .collect::<Result<_, _>>()?;
            for msg in &batch {
                agg.accept(msg)?;
            }
        }
        let sum = agg.finish()?;

        self.ledger.charge_key_exchange(round.round_id, self.graph.degree());
        let senders: Vec<usize> = (0..n).collect();
        self.ledger
            .charge_payloads(label, round.round_id, &senders, length, wire_len(length) as u64);
        Ok(self.codec.decode(&sum))
    }
}
