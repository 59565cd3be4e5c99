//! GF-CF and Turbo-CF scoring from a [`FilterSet`], and the centralized
//! pipeline that builds the same filters from the full interaction matrix.

use thiserror::Error;

use crate::dataset::{split_clients, ClientProfile, InteractionDataset};
use crate::linalg::{diag_power, elementwise_power, gaussian_matrix, gram_schmidt_qr, DenseMatrix, DiagonalVector, LinalgError, ZeroPolicy};
use crate::protocol::{ideal_low_pass, FilterSet, Gram, ProtocolConfig, ProtocolError};
use crate::secagg::CommLedger;

#[derive(Debug, Error)]
pub enum RecommenderError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid scoring configuration: {0}")]
    Config(String),

    #[error("non-finite score for user {user} at item {item}")]
    NonFinite { user: usize, item: usize },

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GfCf,
    TurboCf,
}

/// How the Turbo-CF coefficients combine the powered matrix `P̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyMode {
    /// `(Σ α_k) P̄`.
    AsWritten,
    /// `Σ α_k P̄^k`.
    Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurboConfig {
    /// Element-wise exponent applied to the item-item matrix.
    pub s: f64,
    /// One coefficient per term; `K` is the length.
    pub alphas: Vec<f64>,
    pub mode: PolyMode,
}

impl Default for TurboConfig {
    fn default() -> Self {
        Self {
            s: 1.0,
            alphas: vec![1.0],
            mode: PolyMode::AsWritten,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringConfig {
    pub method: Method,
    pub gamma: f64,
    pub turbo: TurboConfig,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            method: Method::GfCf,
            gamma: 0.3,
            turbo: TurboConfig::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), RecommenderError> {
        if !(self.gamma >= 0.0) {
            return Err(RecommenderError::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.method == Method::TurboCf {
            if self.turbo.alphas.is_empty() {
                return Err(RecommenderError::Config("turbo-cf needs at least one coefficient".into()));
            }
            if !self.turbo.s.is_finite() || self.turbo.alphas.iter().any(|a| !a.is_finite()) {
                return Err(RecommenderError::Config("turbo-cf parameters must be finite".into()));
            }
        }
        Ok(())
    }

    /// Short label for reports, e.g. `gfcf` or `turbocf-polynomial`.
    pub fn variant_label(&self) -> &'static str {
        match (self.method, self.turbo.mode) {
            (Method::GfCf, _) => "gfcf",
            (Method::TurboCf, PolyMode::AsWritten) => "turbocf-as-written",
            (Method::TurboCf, PolyMode::Polynomial) => "turbocf-polynomial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub user_id: usize,
    pub scores: Vec<f64>,
}

impl ScoreRow {
    fn checked(user_id: usize, scores: Vec<f64>) -> Result<Self, RecommenderError> {
        if let Some(item) = scores.iter().position(|s| !s.is_finite()) {
            return Err(RecommenderError::NonFinite { user: user_id, item });
        }
        Ok(Self { user_id, scores })
    }
}

/// A scoring configuration bound to one filter set, with any per-run
/// preprocessing (the element-wise power for Turbo-CF) done once.
#[derive(Debug)]
pub struct Scorer<'a> {
    filters: &'a FilterSet,
    kind: ScorerKind,
}

#[derive(Debug)]
enum ScorerKind {
    GfCf { gamma: f64 },
    Turbo { powered: DenseMatrix, alphas: Vec<f64>, mode: PolyMode },
}

impl<'a> Scorer<'a> {
    pub fn new(filters: &'a FilterSet, config: &ScoringConfig) -> Result<Self, RecommenderError> {
        config.validate()?;
        let kind = match config.method {
            Method::GfCf => ScorerKind::GfCf { gamma: config.gamma },
            Method::TurboCf => {
                let Gram::Dense(p) = &filters.gram else {
                    return Err(RecommenderError::Unsupported(
                        "turbo-cf needs a dense item-item matrix; element-wise powers of a low-rank factorization are not low rank".into(),
                    ));
                };
                ScorerKind::Turbo {
                    powered: elementwise_power(p, config.turbo.s)?,
                    alphas: config.turbo.alphas.clone(),
                    mode: config.turbo.mode,
                }
            }
        };
        Ok(Self { filters, kind })
    }

    pub fn n_items(&self) -> usize {
        self.filters.n_items()
    }

    pub fn score(&self, profile: &ClientProfile) -> Result<ScoreRow, RecommenderError> {
        self.score_items(profile.user_id, &profile.items)
    }

    /// Scores a user from the support of their row, which may be empty.
    pub fn score_items(&self, user_id: usize, items: &[usize]) -> Result<ScoreRow, RecommenderError> {
        let n = self.filters.n_items();
        if let Some(&bad) = items.iter().find(|&&i| i >= n) {
            return Err(RecommenderError::Dimension(format!(
                "user {user_id} holds item {bad} but the filters cover {n} items"
            )));
        }
        let scores = match &self.kind {
            ScorerKind::GfCf { gamma } => {
                let mut row = self.filters.gram.row_product(items);
                if *gamma != 0.0 {
                    let low = self.filters.lowpass.apply_items(items);
                    for (r, l) in row.iter_mut().zip(low) {
                        *r += gamma * l;
                    }
                }
                row
            }
            ScorerKind::Turbo { powered, alphas, mode } => {
                let first = vec_mat(&indicator(items, n), powered);
                turbo_combine(powered, first, alphas, *mode)
            }
        };
        ScoreRow::checked(user_id, scores)
    }
}

fn turbo_combine(powered: &DenseMatrix, first: Vec<f64>, alphas: &[f64], mode: PolyMode) -> Vec<f64> {
    match mode {
        PolyMode::AsWritten => {
            let total: f64 = alphas.iter().sum();
            first.into_iter().map(|v| total * v).collect()
        }
        PolyMode::Polynomial => {
            let mut out: Vec<f64> = first.iter().map(|v| alphas[0] * v).collect();
            let mut term = first;
            for &a in &alphas[1..] {
                term = vec_mat(&term, powered);
                for (o, t) in out.iter_mut().zip(&term) {
                    *o += a * t;
                }
            }
            out
        }
    }
}

fn indicator(items: &[usize], n: usize) -> Vec<f64> {
    let mut r = vec![0.0; n];
    for &i in items {
        r[i] = 1.0;
    }
    r
}

fn vec_mat(v: &[f64], m: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (i, &w) in v.iter().enumerate() {
        if w != 0.0 {
            for (o, x) in out.iter_mut().zip(m.row(i)) {
                *o += w * x;
            }
        }
    }
    out
}

/// `r_uᵀ (P̃ + γ F)`, with `F` applied in factored form.
pub fn gfcf_score(profile: &ClientProfile, filters: &FilterSet, gamma: f64) -> Result<ScoreRow, RecommenderError> {
    let config = ScoringConfig {
        method: Method::GfCf,
        gamma,
        ..ScoringConfig::default()
    };
    Scorer::new(filters, &config)?.score(profile)
}

/// Turbo-CF row for one user. Builds the powered matrix on every call; use
/// a [`Scorer`] for more than a handful of users.
pub fn turbocf_score(profile: &ClientProfile, filters: &FilterSet, turbo: &TurboConfig) -> Result<ScoreRow, RecommenderError> {
    let config = ScoringConfig {
        method: Method::TurboCf,
        gamma: 0.0,
        turbo: turbo.clone(),
    };
    Scorer::new(filters, &config)?.score(profile)
}

/// `R̃ = U^{-α} R V^{α-1}` as a dense `clients x n_items` matrix, with `V`
/// the item degrees over these clients.
pub fn normalized_interactions(clients: &[ClientProfile], n_items: usize, alpha: f64) -> Result<(DenseMatrix, DiagonalVector), RecommenderError> {
    let mut counts = vec![0.0; n_items];
    for c in clients {
        for &i in &c.items {
            if i >= n_items {
                return Err(RecommenderError::Dimension(format!("item {i} outside {n_items} items")));
            }
            counts[i] += 1.0;
        }
    }
    let degrees = DiagonalVector::new(counts);
    let item_scale = diag_power(&degrees, alpha - 1.0, ZeroPolicy::ClampZero)?;
    let mut r = DenseMatrix::zeros(clients.len(), n_items);
    for (u, c) in clients.iter().enumerate() {
        let user_scale = (c.degree() as f64).powf(-alpha);
        let row = r.row_mut(u);
        for &i in &c.items {
            row[i] = user_scale * item_scale[i];
        }
    }
    Ok((r, degrees))
}

/// Exact filters from the whole dataset: `P̃ = R̃ᵀR̃` in floating point and
/// the low-pass basis from a randomized power iteration that
/// re-orthonormalizes after every product. It draws the same Gaussian
/// sketch as the distributed protocol, so with enough iterations the two
/// agree up to quantization. The ledger is empty.
pub fn centralized_pipeline(ds: &InteractionDataset, config: &ProtocolConfig) -> Result<FilterSet, RecommenderError> {
    let clients = split_clients(ds).clients;
    let n_items = ds.n_items();
    config.validate(n_items, clients.len())?;
    config.check_dense_budget(n_items)?;
    config.check_dense_budget(clients.len().max(n_items))?;

    let (r, degrees) = normalized_interactions(&clients, n_items, config.alpha)?;
    let gram = r.t_matmul(&r)?;

    let sketch = gram_schmidt_qr(&gaussian_matrix(clients.len(), config.rank, config.seed)).map_err(ProtocolError::from)?;
    let mut q = gram_schmidt_qr(&r.t_matmul(&sketch.x)?).map_err(ProtocolError::from)?;
    for _ in 1..config.iterations {
        let w = gram_schmidt_qr(&r.matmul(&q.x)?).map_err(ProtocolError::from)?;
        q = gram_schmidt_qr(&r.t_matmul(&w.x)?).map_err(ProtocolError::from)?;
    }
    let lowpass = ideal_low_pass(&q.x, &degrees, config.filter_rank)?;

    Ok(FilterSet {
        item_degrees: degrees,
        gram: Gram::Dense(gram),
        lowpass,
        rank: config.rank,
        fraction_bits: config.fraction_bits,
        ledger: CommLedger::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;
    use crate::linalg::gaussian_matrix;

    fn filters_with_gram(p: DenseMatrix) -> FilterSet {
        let n = p.rows();
        let degrees = DiagonalVector::new(vec![1.0; n]);
        FilterSet {
            lowpass: ideal_low_pass(&DenseMatrix::identity(n), &degrees, n).unwrap(),
            item_degrees: degrees,
            gram: Gram::Dense(p),
            rank: n,
            fraction_bits: 20,
            ledger: CommLedger::default(),
        }
    }

    fn fixture() -> InteractionDataset {
        InteractionDataset::new(2, 2, vec![vec![0, 1], vec![1]], vec![vec![], vec![0]]).unwrap()
    }

    fn fixture_config() -> ProtocolConfig {
        ProtocolConfig {
            rank: 2,
            filter_rank: 2,
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn identity_gram_returns_the_profile() {
        let fs = filters_with_gram(DenseMatrix::identity(5));
        let row = gfcf_score(&ClientProfile::new(0, vec![3]), &fs, 0.0).unwrap();
        assert_eq!(row.scores, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_item_row_sums() {
        let fs = centralized_pipeline(&fixture(), &fixture_config()).unwrap();
        let row = gfcf_score(&ClientProfile::new(0, vec![0, 1]), &fs, 0.0).unwrap();
        assert!((row.scores[0] - 0.853553).abs() < 1e-6);
        assert!((row.scores[1] - 1.103553).abs() < 1e-6);
    }

    #[test]
    fn centralized_fixture_matches_hand_values() {
        let fs = centralized_pipeline(&fixture(), &fixture_config()).unwrap();
        let h = 0.5 / 2f64.sqrt();
        let expected = DenseMatrix::from_rows(&[&[0.5, h], &[h, 0.75]]);
        assert!(fs.gram.densify().max_abs_diff(&expected) <= 1e-15);
        assert!(fs.ledger.records().is_empty());
    }

    #[test]
    fn centralized_gram_symmetric_and_full_basis_complete() {
        let ds = generate_synthetic(60, 12, 0.3, 4).unwrap();
        let config = ProtocolConfig {
            rank: 12,
            filter_rank: 12,
            iterations: 3,
            ..ProtocolConfig::default()
        };
        let fs = centralized_pipeline(&ds, &config).unwrap();
        assert!(fs.gram.densify().is_symmetric(1e-12));
        let s = &fs.lowpass.basis;
        let proj = s.matmul(&s.transpose()).unwrap();
        assert!(proj.max_abs_diff(&DenseMatrix::identity(12)) < 1e-8);
    }

    #[test]
    fn turbo_square_root_example() {
        let fs = filters_with_gram(DenseMatrix::from_rows(&[&[4.0, 0.0], &[0.0, 9.0]]));
        let turbo = TurboConfig {
            s: 0.5,
            alphas: vec![2.0],
            mode: PolyMode::AsWritten,
        };
        let row = turbocf_score(&ClientProfile::new(0, vec![0]), &fs, &turbo).unwrap();
        assert_eq!(row.scores, vec![4.0, 0.0]);
    }

    #[test]
    fn turbo_identity_settings_reduce_to_gram() {
        let ds = generate_synthetic(30, 10, 0.3, 2).unwrap();
        let fs = centralized_pipeline(&ds, &ProtocolConfig { rank: 4, filter_rank: 4, ..ProtocolConfig::default() }).unwrap();
        let profile = ClientProfile::new(0, ds.train(0).to_vec());
        let plain = gfcf_score(&profile, &fs, 0.0).unwrap();
        let as_written = turbocf_score(&profile, &fs, &TurboConfig::default()).unwrap();
        let poly = turbocf_score(
            &profile,
            &fs,
            &TurboConfig {
                mode: PolyMode::Polynomial,
                ..TurboConfig::default()
            },
        )
        .unwrap();
        assert_eq!(plain, as_written);
        assert_eq!(as_written, poly);
    }

    #[test]
    fn polynomial_mode_uses_matrix_powers() {
        let p = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.5, 1.0]]);
        let fs = filters_with_gram(p.clone());
        let turbo = TurboConfig {
            s: 1.0,
            alphas: vec![1.0, 0.5],
            mode: PolyMode::Polynomial,
        };
        let row = turbocf_score(&ClientProfile::new(0, vec![0]), &fs, &turbo).unwrap();
        let p2 = p.matmul(&p).unwrap();
        let expected: Vec<f64> = (0..2).map(|j| p[(0, j)] + 0.5 * p2[(0, j)]).collect();
        assert_eq!(row.scores, expected);
    }

    #[test]
    fn turbo_rejects_low_rank_gram() {
        let q = gram_schmidt_qr(&gaussian_matrix(4, 2, 0)).unwrap().x;
        let mut fs = filters_with_gram(DenseMatrix::identity(4));
        fs.gram = Gram::LowRank {
            basis: q,
            lambda: DiagonalVector::new(vec![1.0, 0.5]),
        };
        let err = turbocf_score(&ClientProfile::new(0, vec![0]), &fs, &TurboConfig::default()).unwrap_err();
        assert!(matches!(err, RecommenderError::Unsupported(_)));
    }

    #[test]
    fn factored_matches_dense_and_is_affine_in_gamma() {
        let ds = generate_synthetic(40, 16, 0.25, 6).unwrap();
        let config = ProtocolConfig {
            rank: 6,
            filter_rank: 3,
            iterations: 3,
            ..ProtocolConfig::default()
        };
        let fs = centralized_pipeline(&ds, &config).unwrap();
        let dense_f = fs.lowpass.densify();
        let dense_p = fs.gram.densify();
        for u in 0..5 {
            let profile = ClientProfile::new(u, ds.train(u).to_vec());
            let mut r = vec![0.0; 16];
            for &i in &profile.items {
                r[i] = 1.0;
            }
            let rm = DenseMatrix::from_rows(&[&r]);
            let base = rm.matmul(&dense_p).unwrap();
            let low = rm.matmul(&dense_f).unwrap();
            let s0 = gfcf_score(&profile, &fs, 0.0).unwrap().scores;
            let s1 = gfcf_score(&profile, &fs, 1.0).unwrap().scores;
            let s3 = gfcf_score(&profile, &fs, 0.3).unwrap().scores;
            for j in 0..16 {
                let dense = base[(0, j)] + 0.3 * low[(0, j)];
                assert!((s3[j] - dense).abs() <= 1e-10);
                let affine = s0[j] + 0.3 * (s1[j] - s0[j]);
                assert!((s3[j] - affine).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn item_out_of_range_is_rejected() {
        let fs = filters_with_gram(DenseMatrix::identity(3));
        assert!(matches!(
            gfcf_score(&ClientProfile::new(0, vec![5]), &fs, 0.3),
            Err(RecommenderError::Dimension(_))
        ));
    }
}
