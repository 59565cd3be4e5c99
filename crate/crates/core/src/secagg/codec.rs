//! Fixed-point encoding of reals into the ring Z/2^64.

use super::SecAggError;

pub const RING_BITS: u32 = 64;
pub const DEFAULT_FRACTION_BITS: u32 = 20;

/// Maps `x` to `round(x · 2^fraction_bits)` in two's complement.
///
/// Sums of encodings are exact in the ring as long as the true sum stays
/// below `2^63` in magnitude, which `encode` enforces per scalar given the
/// number of participants that will be summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPointCodec {
    fraction_bits: u32,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self {
            fraction_bits: DEFAULT_FRACTION_BITS,
        }
    }
}

impl FixedPointCodec {
    pub fn new(fraction_bits: u32) -> Result<Self, SecAggError> {
        if fraction_bits >= RING_BITS - 1 {
            return Err(SecAggError::Config(format!(
                "fraction_bits must be below {}, got {fraction_bits}",
                RING_BITS - 1
            )));
        }
        Ok(Self { fraction_bits })
    }

    pub fn fraction_bits(&self) -> u32 {
        self.fraction_bits
    }

    fn scale(&self) -> f64 {
        (self.fraction_bits as f64).exp2()
    }

    /// Worst-case decode error of a sum of `n` encodings: `n · 2^-(f+1)`.
    pub fn sum_tolerance(&self, n: usize) -> f64 {
        n as f64 * (-(self.fraction_bits as f64) - 1.0).exp2()
    }

    pub fn encode(&self, x: &[f64], n_participants: usize) -> Result<Vec<u64>, SecAggError> {
        let scale = self.scale();
        let limit = (RING_BITS as f64 - 1.0).exp2();
        let n = n_participants.max(1) as f64;
        x.iter()
            .enumerate()
            .map(|(index, &value)| {
                let scaled = value * scale;
                if !(scaled.abs() * n < limit) {
                    return Err(SecAggError::Overflow { index, value });
                }
                Ok(scaled.round() as i64 as u64)
            })
            .collect()
    }

    pub fn decode(&self, v: &[u64]) -> Vec<f64> {
        let scale = self.scale();
        v.iter().map(|&r| r as i64 as f64 / scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_examples() {
        let codec = FixedPointCodec::default();
        assert_eq!(codec.encode(&[0.0], 1).unwrap(), vec![0]);
        assert_eq!(codec.encode(&[1.5], 1).unwrap(), vec![1_572_864]);
        assert_eq!(codec.encode(&[-1.0], 1).unwrap(), vec![0u64.wrapping_sub(1 << 20)]);
    }

    #[test]
    fn decode_examples() {
        let codec = FixedPointCodec::default();
        let x = 341.0 / 1024.0;
        assert_eq!(codec.decode(&codec.encode(&[x], 1).unwrap()), vec![x]);
        let pi = codec.decode(&codec.encode(&[std::f64::consts::PI], 1).unwrap())[0];
        assert!((pi - std::f64::consts::PI).abs() <= 2f64.powi(-21));
        assert_eq!(codec.decode(&[0]), vec![0.0]);
    }

    #[test]
    fn overflow_names_index() {
        let codec = FixedPointCodec::default();
        // 2^42 · 2^20 = 2^62, doubled by two participants reaches 2^63
        let big = 2f64.powi(42);
        assert!(codec.encode(&[1.0, big], 1).is_ok());
        assert!(matches!(
            codec.encode(&[1.0, big], 2),
            Err(SecAggError::Overflow { index: 1, .. })
        ));
        assert!(matches!(
            codec.encode(&[f64::NAN], 1),
            Err(SecAggError::Overflow { index: 0, .. })
        ));
    }

    #[test]
    fn fraction_bits_must_fit() {
        assert!(FixedPointCodec::new(63).is_err());
        assert!(FixedPointCodec::new(40).is_ok());
    }

    proptest! {
        #[test]
        fn round_trip_error_bound(x in -1e6f64..1e6, bits in 0u32..40) {
            let codec = FixedPointCodec::new(bits).unwrap();
            let back = codec.decode(&codec.encode(&[x], 1).unwrap())[0];
            prop_assert!((back - x).abs() <= codec.sum_tolerance(1));
        }

        #[test]
        fn ring_sum_of_encodings(xs in prop::collection::vec(-100f64..100.0, 1..50)) {
            let codec = FixedPointCodec::default();
            let n = xs.len();
            let sum = codec.encode(&xs, n).unwrap().into_iter().fold(0u64, u64::wrapping_add);
            let decoded = codec.decode(&[sum])[0];
            let exact: f64 = xs.iter().sum();
            prop_assert!((decoded - exact).abs() <= codec.sum_tolerance(n) + 1e-9);
        }
    }
}
