//! Pairwise-canceling masks and server-side summation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{CommLedger, FixedPointCodec, MaskGraph, PairSeed, SecAggError};

/// Size of the little-endian message header: round id, sender, length.
pub const HEADER_BYTES: usize = 8 + 4 + 8;

/// Declared shape of one aggregation round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundSpec {
    pub round_id: u64,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedMessage {
    pub sender: u32,
    pub round_id: u64,
    pub payload: Vec<u64>,
}

impl MaskedMessage {
    pub fn wire_len(&self) -> usize {
        wire_len(self.payload.len())
    }

    /// `{round_id: u64, sender: u32, length: u64}` then the payload, all
    /// little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.round_id.to_le_bytes());
        out.extend_from_slice(&self.sender.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SecAggError> {
        let malformed = |why: &str| SecAggError::Malformed(why.to_owned());
        if bytes.len() < HEADER_BYTES {
            return Err(malformed("truncated header"));
        }
        let round_id = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
        let sender = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let length = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[HEADER_BYTES..];
        if length.checked_mul(8) != Some(body.len()) {
            return Err(malformed("payload length does not match header"));
        }
        let payload = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            sender,
            round_id,
            payload,
        })
    }
}

pub fn wire_len(elements: usize) -> usize {
    HEADER_BYTES + 8 * elements
}

/// Expands a pair seed into `length` ring elements for `round_id`.
///
/// ChaCha20 keyed with the 256-bit seed, using the round id as the stream
/// number, so each (pair, round) gets an independent keystream.
pub fn prg_expand(seed: &PairSeed, round_id: u64, length: usize) -> Vec<u64> {
    let mut rng = ChaCha20Rng::from_seed(*seed);
    rng.set_stream(round_id);
    (0..length).map(|_| rng.next_u64()).collect()
}

/// The sum of pairwise masks client `sender` adds to its encoding.
///
/// For each neighbor `v`, the pair's keystream is added when
/// `sender < v` and subtracted otherwise, so the masks of a pair cancel.
pub fn mask_vector(sender: usize, round: &RoundSpec, graph: &MaskGraph) -> Vec<u64> {
    let mut mask = vec![0u64; round.length];
    for &v in graph.neighbors(sender) {
        let seed = graph
            .pair_seed(sender, v)
            .expect("neighbors always share a seed");
        let stream = prg_expand(&seed, round.round_id, round.length);
        if sender < v {
            for (m, s) in mask.iter_mut().zip(stream) {
                *m = m.wrapping_add(s);
            }
        } else {
            for (m, s) in mask.iter_mut().zip(stream) {
                *m = m.wrapping_sub(s);
            }
        }
    }
    mask
}

pub fn mask_contribution(
    values: &[f64],
    sender: usize,
    round: &RoundSpec,
    graph: &MaskGraph,
    codec: &FixedPointCodec,
) -> Result<MaskedMessage, SecAggError> {
    if sender >= graph.participants() {
        return Err(SecAggError::UnknownSender(sender));
    }
    if values.len() != round.length {
        return Err(SecAggError::LengthMismatch {
            sender,
            expected: round.length,
            got: values.len(),
        });
    }
    let mut payload = codec.encode(values, graph.participants())?;
    for (p, m) in payload.iter_mut().zip(mask_vector(sender, round, graph)) {
        *p = p.wrapping_add(m);
    }
    Ok(MaskedMessage {
        sender: sender as u32,
        round_id: round.round_id,
        payload,
    })
}

/// Server-side state of one round: a running ring sum plus the set of
/// senders heard from.
#[derive(Debug)]
pub struct Aggregation {
    round: RoundSpec,
    sum: Vec<u64>,
    seen: Vec<bool>,
}

impl Aggregation {
    pub fn new(round: RoundSpec, participants: usize) -> Self {
        Self {
            round,
            sum: vec![0; round.length],
            seen: vec![false; participants],
        }
    }

    pub fn accept(&mut self, msg: &MaskedMessage) -> Result<(), SecAggError> {
        let sender = msg.sender as usize;
        if msg.round_id != self.round.round_id {
            return Err(SecAggError::RoundMismatch {
                expected: self.round.round_id,
                got: msg.round_id,
            });
        }
        let Some(seen) = self.seen.get_mut(sender) else {
            return Err(SecAggError::UnknownSender(sender));
        };
        if *seen {
            return Err(SecAggError::DuplicateSender(sender));
        }
        if msg.payload.len() != self.round.length {
            return Err(SecAggError::LengthMismatch {
                sender,
                expected: self.round.length,
                got: msg.payload.len(),
            });
        }
        *seen = true;
        for (s, p) in self.sum.iter_mut().zip(&msg.payload) {
            *s = s.wrapping_add(*p);
        }
        Ok(())
    }

    /// Raw ring sum; fails if any participant is missing.
    pub fn finish(self) -> Result<Vec<u64>, SecAggError> {
        if let Some(missing) = self.seen.iter().position(|s| !s) {
            return Err(SecAggError::MissingSender(missing));
        }
        Ok(self.sum)
    }
}

/// Sums one message per participant and decodes the result.
///
/// There is no dropout recovery: a missing or repeated sender aborts the
/// round.
pub fn aggregate(
    messages: &[MaskedMessage],
    round: &RoundSpec,
    participants: usize,
    codec: &FixedPointCodec,
    ledger: &mut CommLedger,
) -> Result<Vec<f64>, SecAggError> {
    let mut agg = Aggregation::new(*round, participants);
    for msg in messages {
        agg.accept(msg)?;
    }
    let sum = agg.finish()?;
    let senders: Vec<usize> = (0..participants).collect();
    ledger.charge_payloads(
        "aggregate",
        round.round_id,
        &senders,
        round.length,
        wire_len(round.length) as u64,
    );
    Ok(codec.decode(&sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secagg::MaskGraph;
    use proptest::prelude::*;
    use rand::Rng;

    fn ring_sum(vectors: impl IntoIterator<Item = Vec<u64>>, len: usize) -> Vec<u64> {
        vectors.into_iter().fold(vec![0; len], |mut acc, v| {
            for (a, b) in acc.iter_mut().zip(v) {
                *a = a.wrapping_add(b);
            }
            acc
        })
    }

    #[test]
    fn lone_client_sends_plain_encoding() {
        let g = MaskGraph::build(1, 2.0, 3);
        let codec = FixedPointCodec::default();
        let round = RoundSpec { round_id: 0, length: 3 };
        let x = [0.5, -2.0, 7.25];
        let msg = mask_contribution(&x, 0, &round, &g, &codec).unwrap();
        assert_eq!(msg.payload, codec.encode(&x, 1).unwrap());
    }

    #[test]
    fn two_clients_masks_are_opposite() {
        let g = MaskGraph::build(2, 2.0, 3);
        let codec = FixedPointCodec::default();
        let round = RoundSpec { round_id: 5, length: 4 };
        let zeros = [0.0; 4];
        let a = mask_contribution(&zeros, 0, &round, &g, &codec).unwrap();
        let b = mask_contribution(&zeros, 1, &round, &g, &codec).unwrap();
        let stream = prg_expand(&g.pair_seed(0, 1).unwrap(), 5, 4);
        assert_eq!(a.payload, stream);
        let negated: Vec<u64> = stream.iter().map(|s| 0u64.wrapping_sub(*s)).collect();
        assert_eq!(b.payload, negated);
        assert_eq!(ring_sum([a.payload, b.payload], 4), vec![0; 4]);
    }

    #[test]
    fn masked_sum_equals_plain_sum_for_five() {
        let g = MaskGraph::build(5, 2.0, 11);
        let codec = FixedPointCodec::default();
        let round = RoundSpec { round_id: 2, length: 6 };
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let inputs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..6).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let masked = inputs
            .iter()
            .enumerate()
            .map(|(u, x)| mask_contribution(x, u, &round, &g, &codec).unwrap().payload);
        let plain = inputs.iter().map(|x| codec.encode(x, 5).unwrap());
        assert_eq!(ring_sum(masked, 6), ring_sum(plain, 6));
    }

    #[test]
    fn aggregate_three_clients() {
        let g = MaskGraph::build(3, 2.0, 0);
        let codec = FixedPointCodec::default();
        let round = RoundSpec { round_id: 0, length: 1 };
        let msgs: Vec<_> = [1.0, 2.0, 3.5]
            .iter()
            .enumerate()
            .map(|(u, x)| mask_contribution(&[*x], u, &round, &g, &codec).unwrap())
            .collect();
        let mut ledger = CommLedger::new(3);
        let out = aggregate(&msgs, &round, 3, &codec, &mut ledger).unwrap();
        assert!((out[0] - 6.5).abs() <= codec.sum_tolerance(3));
        assert_eq!(
            ledger.server().received(crate::secagg::Traffic::MaskedPayload),
            3 * wire_len(1) as u64
        );
    }

    #[test]
    fn all_zero_inputs_decode_exactly() {
        let g = MaskGraph::build(6, 2.0, 0);
        let codec = FixedPointCodec::default();
        let round = RoundSpec { round_id: 9, length: 5 };
        let msgs: Vec<_> = (0..6)
            .map(|u| mask_contribution(&[0.0; 5], u, &round, &g, &codec).unwrap())
            .collect();
        let out = aggregate(&msgs, &round, 6, &codec, &mut CommLedger::new(6)).unwrap();
        assert_eq!(out, vec![0.0; 5]);
    }

    #[test]
    fn missing_and_duplicate_senders_abort() {
        let g = MaskGraph::build(4, 2.0, 0);
        let codec = FixedPointCodec::default();
        let round = RoundSpec { round_id: 0, length: 2 };
        let mut ledger = CommLedger::new(4);
        assert!(matches!(
            aggregate(&[], &round, 4, &codec, &mut ledger),
            Err(SecAggError::MissingSender(0))
        ));
        let m0 = mask_contribution(&[1.0, 1.0], 0, &round, &g, &codec).unwrap();
        assert!(matches!(
            aggregate(&[m0.clone(), m0], &round, 4, &codec, &mut ledger),
            Err(SecAggError::DuplicateSender(0))
        ));
        assert_eq!(ledger.secagg_rounds(), 0);
    }

    #[test]
    fn wrong_round_or_length_is_rejected() {
        let g = MaskGraph::build(2, 2.0, 0);
        let codec = FixedPointCodec::default();
        let round = RoundSpec { round_id: 1, length: 2 };
        assert!(matches!(
            mask_contribution(&[1.0], 0, &round, &g, &codec),
            Err(SecAggError::LengthMismatch { .. })
        ));
        let other = RoundSpec { round_id: 2, length: 2 };
        let msg = mask_contribution(&[1.0, 2.0], 0, &other, &g, &codec).unwrap();
        let mut agg = Aggregation::new(round, 2);
        assert!(matches!(agg.accept(&msg), Err(SecAggError::RoundMismatch { .. })));
    }

    #[test]
    fn header_layout() {
        let msg = MaskedMessage {
            sender: 7,
            round_id: 0x0102,
            payload: vec![u64::MAX, 1],
        };
        let bytes = msg.to_bytes();
        assert_eq!(bytes.len(), 20 + 16);
        assert_eq!(&bytes[0..8], &[2, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[7, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(MaskedMessage::from_bytes(&bytes).unwrap(), msg);
        assert!(MaskedMessage::from_bytes(&bytes[..30]).is_err());
    }

    proptest! {
        // The payload minus the encoding depends only on seeds and round,
        // never on the input.
        #[test]
        fn mask_is_independent_of_input(n in 2usize..20, sender_pick in any::<prop::sample::Index>(),
                                        x in prop::collection::vec(-50f64..50.0, 4),
                                        y in prop::collection::vec(-50f64..50.0, 4),
                                        round_id in any::<u64>(), seed in any::<u64>()) {
            let g = MaskGraph::build(n, 2.0, seed);
            let codec = FixedPointCodec::default();
            let round = RoundSpec { round_id, length: 4 };
            let u = sender_pick.index(n);
            let strip = |v: &[f64]| {
                let msg = mask_contribution(v, u, &round, &g, &codec).unwrap();
                msg.payload.iter().zip(codec.encode(v, n).unwrap())
                    .map(|(p, e)| p.wrapping_sub(e)).collect::<Vec<_>>()
            };
            let mx = strip(&x);
            prop_assert_eq!(&mx, &strip(&y));
            prop_assert_eq!(mx, mask_vector(u, &round, &g));
        }

        #[test]
        fn masks_cancel(n in 1usize..60, c in 0.5f64..4.0, round_id in any::<u64>(), seed in any::<u64>()) {
            let g = MaskGraph::build(n, c, seed);
            let round = RoundSpec { round_id, length: 3 };
            let total = ring_sum((0..n).map(|u| mask_vector(u, &round, &g)), 3);
            prop_assert_eq!(total, vec![0u64; 3]);
        }
    }
}
