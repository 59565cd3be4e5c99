//! Computed filters and their on-disk container.
//!
//! Container layout, all little-endian:
//!
//! ```text
//! magic        [u8; 4]  "PRVF"
//! version      u32      1
//! n_items      u64
//! mode         u8       0 = dense, 1 = lowrank
//! rank         u64      power-method iteration rank
//! filter_rank  u64      columns of the low-pass basis
//! fraction_bits u32
//! V            n_items × f64
//! gram         dense: n_items² × f64 (row-major)
//!              lowrank: S_k (n_items × rank, row-major), then lambda (rank)
//! S_p          n_items × filter_rank × f64 (row-major)
//! ```

use std::io::{self, Read, Write};

use crate::linalg::{diag_power, DenseMatrix, DiagonalVector, ZeroPolicy};
use crate::secagg::CommLedger;

use super::ProtocolError;

const MAGIC: &[u8; 4] = b"PRVF";
const VERSION: u32 = 1;

/// Item-item matrix, either materialized or as `S Λ Sᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gram {
    Dense(DenseMatrix),
    LowRank {
        basis: DenseMatrix,
        lambda: DiagonalVector,
    },
}

impl Gram {
    pub fn n_items(&self) -> usize {
        match self {
            Gram::Dense(p) => p.rows(),
            Gram::LowRank { basis, .. } => basis.rows(),
        }
    }

    /// `r_uᵀ G` for a binary row with support `items`.
    pub fn row_product(&self, items: &[usize]) -> Vec<f64> {
        match self {
            Gram::Dense(p) => {
                let mut out = vec![0.0; p.cols()];
                for &i in items {
                    for (o, v) in out.iter_mut().zip(p.row(i)) {
                        *o += v;
                    }
                }
                out
            }
            Gram::LowRank { basis, lambda } => {
                let k = basis.cols();
                let mut coeffs = vec![0.0; k];
                for &i in items {
                    for (c, s) in coeffs.iter_mut().zip(basis.row(i)) {
                        *c += s;
                    }
                }
                for (c, l) in coeffs.iter_mut().zip(lambda.values()) {
                    *c *= l;
                }
                (0..basis.rows())
                    .map(|j| basis.row(j).iter().zip(&coeffs).map(|(s, c)| s * c).sum())
                    .collect()
            }
        }
    }

    pub fn densify(&self) -> DenseMatrix {
        match self {
            Gram::Dense(p) => p.clone(),
            Gram::LowRank { basis, lambda } => {
                let scaled = DenseMatrix::from_fn(basis.rows(), basis.cols(), |i, j| basis[(i, j)] * lambda[j]);
                scaled.matmul(&basis.transpose()).expect("shapes agree")
            }
        }
    }
}

/// `F = V^{-1/2} S Sᵀ V^{1/2}` held as its factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPassFilter {
    pub inv_sqrt_degrees: DiagonalVector,
    pub basis: DenseMatrix,
    pub sqrt_degrees: DiagonalVector,
}

impl LowPassFilter {
    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    /// `wᵀ F` for a dense item-space weight vector.
    pub fn apply_row(&self, weights: &[f64]) -> Vec<f64> {
        let p = self.basis.cols();
        let mut coeffs = vec![0.0; p];
        for (i, &w) in weights.iter().enumerate() {
            let scaled = w * self.inv_sqrt_degrees[i];
            if scaled != 0.0 {
                for (c, s) in coeffs.iter_mut().zip(self.basis.row(i)) {
                    *c += scaled * s;
                }
            }
        }
        self.expand(&coeffs)
    }

    /// `r_uᵀ F` for a binary row with support `items`.
    pub fn apply_items(&self, items: &[usize]) -> Vec<f64> {
        let p = self.basis.cols();
        let mut coeffs = vec![0.0; p];
        for &i in items {
            let scaled = self.inv_sqrt_degrees[i];
            for (c, s) in coeffs.iter_mut().zip(self.basis.row(i)) {
                *c += scaled * s;
            }
        }
        self.expand(&coeffs)
    }

    fn expand(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.basis.rows())
            .map(|j| {
                let dot: f64 = self.basis.row(j).iter().zip(coeffs).map(|(s, c)| s * c).sum();
                dot * self.sqrt_degrees[j]
            })
            .collect()
    }

    pub fn densify(&self) -> DenseMatrix {
        let projector = self.basis.matmul(&self.basis.transpose()).expect("shapes agree");
        projector.scale_rows_cols(&self.inv_sqrt_degrees, &self.sqrt_degrees)
    }
}

/// Keeps the leading `filter_rank` columns of an orthonormal basis and
/// conjugates the projector by the item degrees.
pub fn ideal_low_pass(
    basis: &DenseMatrix,
    degrees: &DiagonalVector,
    filter_rank: usize,
) -> Result<LowPassFilter, ProtocolError> {
    if filter_rank == 0 || filter_rank > basis.cols() {
        return Err(ProtocolError::Config(format!(
            "filter rank {filter_rank} must be in 1..={}",
            basis.cols()
        )));
    }
    if degrees.len() != basis.rows() {
        return Err(ProtocolError::Config(format!(
            "{} degrees for a basis over {} items",
            degrees.len(),
            basis.rows()
        )));
    }
    Ok(LowPassFilter {
        inv_sqrt_degrees: diag_power(degrees, -0.5, ZeroPolicy::ClampZero)?,
        basis: basis.leading_columns(filter_rank),
        sqrt_degrees: diag_power(degrees, 0.5, ZeroPolicy::ClampZero)?,
    })
}

/// Everything a scorer needs, plus the traffic it took to build.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSet {
    pub item_degrees: DiagonalVector,
    pub gram: Gram,
    pub lowpass: LowPassFilter,
    /// Iteration rank of the power method that produced `lowpass`.
    pub rank: usize,
    pub fraction_bits: u32,
    pub ledger: CommLedger,
}

impl FilterSet {
    pub fn n_items(&self) -> usize {
        self.item_degrees.len()
    }

    /// Writes the container. The ledger is not serialized.
    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        let n = self.n_items();
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(n as u64).to_le_bytes())?;
        let mode: u8 = match self.gram {
            Gram::Dense(_) => 0,
            Gram::LowRank { .. } => 1,
        };
        out.write_all(&[mode])?;
        out.write_all(&(self.rank as u64).to_le_bytes())?;
        out.write_all(&(self.lowpass.rank() as u64).to_le_bytes())?;
        out.write_all(&self.fraction_bits.to_le_bytes())?;

        write_f64s(&mut out, self.item_degrees.values())?;
        match &self.gram {
            Gram::Dense(p) => write_f64s(&mut out, p.as_slice())?,
            Gram::LowRank { basis, lambda } => {
                write_f64s(&mut out, basis.as_slice())?;
                write_f64s(&mut out, lambda.values())?;
            }
        }
        write_f64s(&mut out, self.lowpass.basis.as_slice())
    }

    /// Reads a container; the ledger of the result is empty.
    pub fn read_from(mut input: impl Read) -> Result<Self, ProtocolError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ProtocolError::Format("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(ProtocolError::Format(format!("unsupported version {version}")));
        }
        let n = read_u64(&mut input)? as usize;
        let mut mode = [0u8; 1];
        input.read_exact(&mut mode)?;
        let rank = read_u64(&mut input)? as usize;
        let filter_rank = read_u64(&mut input)? as usize;
        let fraction_bits = read_u32(&mut input)?;

        let degrees = DiagonalVector::new(read_f64s(&mut input, n)?);
        let gram = match mode[0] {
            0 => Gram::Dense(DenseMatrix::from_vec(n, n, read_f64s(&mut input, n * n)?)?),
            1 => {
                let basis = DenseMatrix::from_vec(n, rank, read_f64s(&mut input, n * rank)?)?;
                let lambda = DiagonalVector::new(read_f64s(&mut input, rank)?);
                Gram::LowRank { basis, lambda }
            }
            other => return Err(ProtocolError::Format(format!("unknown mode {other}"))),
        };
        let basis = DenseMatrix::from_vec(n, filter_rank, read_f64s(&mut input, n * filter_rank)?)?;
        let lowpass = ideal_low_pass(&basis, &degrees, filter_rank)?;
        Ok(Self {
            item_degrees: degrees,
            gram,
            lowpass,
            rank,
            fraction_bits,
            ledger: CommLedger::default(),
        })
    }
}

fn write_f64s(out: &mut impl Write, values: &[f64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

fn read_f64s(input: &mut impl Read, count: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_u32(input: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(input: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
