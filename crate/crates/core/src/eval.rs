//! Top-k ranking metrics.
//!
//! Training items are excluded before ranking and ties go to the lower item
//! index. Users without test items are skipped.

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::InteractionDataset;
use crate::protocol::FilterSet;
use crate::recommender::{RecommenderError, Scorer, ScoringConfig};

pub const DEFAULT_K: usize = 20;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot rank {k} items for user {user}: only {available} are not in train")]
    KTooLarge { user: usize, k: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Recommender(#[from] RecommenderError),
}

/// Denominator of Recall@k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecallConvention {
    /// `min(|test|, k)`.
    #[default]
    MinTestK,
    /// `|test|`.
    TestSize,
}

impl RecallConvention {
    pub fn label(self) -> &'static str {
        match self {
            RecallConvention::MinTestK => "min(test,k)",
            RecallConvention::TestSize => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub recall: RecallConvention,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            recall: RecallConvention::MinTestK,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub recall_at_k: f64,
    pub ndcg_at_k: f64,
    pub k: usize,
    pub users_evaluated: usize,
    pub recall_convention: RecallConvention,
}

/// The `k` highest-scoring items outside `train_items`, best first.
/// `train_items` must be sorted.
pub fn topk(scores: &[f64], train_items: &[usize], k: usize) -> Result<Vec<usize>, EvalError> {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| train_items.binary_search(i).is_err())
        .collect();
    if k > candidates.len() {
        return Err(EvalError::KTooLarge {
            user: usize::MAX,
            k,
            available: candidates.len(),
        });
    }
    let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(order);
    Ok(candidates)
}

/// Hits in `ranked` over the chosen denominator. `None` for an empty test
/// set. `test_items` must be sorted.
pub fn recall_at_k(ranked: &[usize], test_items: &[usize], convention: RecallConvention) -> Option<f64> {
    if test_items.is_empty() {
        return None;
    }
    let hits = ranked.iter().filter(|i| test_items.binary_search(i).is_ok()).count();
    let denom = match convention {
        RecallConvention::MinTestK => test_items.len().min(ranked.len()),
        RecallConvention::TestSize => test_items.len(),
    };
    Some(hits as f64 / denom as f64)
}

/// NDCG with binary gains and `1/log2(j+1)` discount at 1-indexed rank `j`.
/// `test_items` must be sorted.
pub fn ndcg_at_k(ranked: &[usize], test_items: &[usize]) -> Option<f64> {
    if test_items.is_empty() {
        return None;
    }
    let discount = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .enumerate()
        .filter(|(_, i)| test_items.binary_search(i).is_ok())
        .map(|(pos, _)| discount(pos))
        .sum();
    let ideal: f64 = (0..test_items.len().min(ranked.len())).map(discount).sum();
    Some(if ideal > 0.0 { dcg / ideal } else { 0.0 })
}

/// Metrics with default options (`k = 20`, `min(|test|, k)` recall).
pub fn evaluate(ds: &InteractionDataset, filters: &FilterSet, scoring: &ScoringConfig) -> Result<EvalReport, EvalError> {
    evaluate_with(ds, filters, scoring, &EvalOptions::default())
}

pub fn evaluate_with(
    ds: &InteractionDataset,
    filters: &FilterSet,
    scoring: &ScoringConfig,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if filters.n_items() != ds.n_items() {
        return Err(EvalError::Dimension(format!(
            "filters cover {} items, dataset has {}",
            filters.n_items(),
            ds.n_items()
        )));
    }
    let scorer = Scorer::new(filters, scoring)?;
    evaluate_scores(ds, options, |u| Ok(scorer.score_items(u, ds.train(u))?.scores))
}

/// Metrics for an arbitrary per-user scoring function.
pub fn evaluate_scores<F>(ds: &InteractionDataset, options: &EvalOptions, score: F) -> Result<EvalReport, EvalError>
where
    F: Fn(usize) -> Result<Vec<f64>, EvalError> + Sync,
{
    let users: Vec<usize> = (0..ds.n_users()).filter(|&u| !ds.test(u).is_empty()).collect();
    let per_user: Vec<(f64, f64)> = users
        .par_iter()
        .map(|&u| {
            let scores = score(u)?;
            if scores.len() != ds.n_items() {
                return Err(EvalError::Dimension(format!(
                    "user {u}: {} scores for {} items",
                    scores.len(),
                    ds.n_items()
                )));
            }
            let ranked = topk(&scores, ds.train(u), options.k).map_err(|e| match e {
                EvalError::KTooLarge { k, available, .. } => EvalError::KTooLarge { user: u, k, available },
                other => other,
            })?;
            let test = ds.test(u);
            Ok((
                recall_at_k(&ranked, test, options.recall).unwrap_or(0.0),
                ndcg_at_k(&ranked, test).unwrap_or(0.0),
            ))
        })
        .collect::<Result<_, _>>()?;

    let n = per_user.len();
    let (recall, ndcg) = per_user.iter().fold((0.0, 0.0), |(r, g), (ur, ug)| (r + ur, g + ug));
    let mean = |total: f64| if n == 0 { 0.0 } else { total / n as f64 };
    Ok(EvalReport {
        recall_at_k: mean(recall),
        ndcg_at_k: mean(ndcg),
        k: options.k,
        users_evaluated: n,
        recall_convention: options.recall,
    })
}
