//! Full-ranking Top-K evaluation.
//!
//! Every non-excluded item is scored for each user; metrics are macro-averaged
//! over users with a nonempty ground truth.

use std::cmp::Ordering;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{InteractionDataset, Split};
use crate::model::Scorer;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("K = {k} exceeds the {available} rankable items")]
    KTooLarge { k: usize, available: usize },
    #[error("ground truth is empty")]
    EmptyGroundTruth,
}

/// Known positives removed from a user's ranking before Top-K selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionPolicy {
    TrainOnly,
    TrainAndVal,
}

impl ExclusionPolicy {
    /// Validation excludes train positives; test excludes train and validation.
    pub fn default_for(split: Split) -> Self {
        match split {
            Split::Val => ExclusionPolicy::TrainOnly,
            Split::Test => ExclusionPolicy::TrainAndVal,
        }
    }

    pub fn items<'a>(&self, dataset: &'a InteractionDataset, u: usize) -> &'a [usize] {
        match self {
            ExclusionPolicy::TrainOnly => &dataset.train_positive_sets[u],
            ExclusionPolicy::TrainAndVal => &dataset.all_positive_sets[u],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub epoch: usize,
    pub split: Split,
    pub recall: f64,
    pub ndcg: f64,
    pub users_evaluated: usize,
}

#[inline]
fn by_score_desc(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y))
}

/// The `k` best non-excluded items by score, descending, ties to the lower index.
/// `exclusion` must be sorted.
pub fn top_k(scores: &[f64], exclusion: &[usize], k: usize) -> Result<Vec<usize>, EvalError> {
    let mut candidates: Vec<usize> = Vec::with_capacity(scores.len());
    let mut ex = exclusion.iter().peekable();
    for i in 0..scores.len() {
        while ex.next_if(|&&e| e < i).is_some() {}
        if ex.next_if_eq(&&i).is_some() {
            continue;
        }
        candidates.push(i);
    }
    if k > candidates.len() {
        return Err(EvalError::KTooLarge {
            k,
            available: candidates.len(),
        });
    }
    let cmp = by_score_desc(scores);
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, &cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(&cmp);
    Ok(candidates)
}

/// Ranks all items for user `u` and returns the Top-K outside `exclusion`.
pub fn rank_items<S: Scorer + ?Sized>(
    scorer: &S,
    u: usize,
    exclusion: &[usize],
    k: usize,
) -> Result<Vec<usize>, EvalError> {
    let mut scores = vec![0.0; scorer.n_items()];
    scorer.score_all(u, &mut scores);
    top_k(&scores, exclusion, k)
}

fn as_set(ground_truth: &[usize]) -> Result<Vec<usize>, EvalError> {
    if ground_truth.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let mut set = ground_truth.to_vec();
    set.sort_unstable();
    set.dedup();
    Ok(set)
}

/// `|ranked ∩ truth| / |truth|`.
pub fn recall_at_k(ranked: &[usize], ground_truth: &[usize]) -> Result<f64, EvalError> {
    let truth = as_set(ground_truth)?;
    let hits = ranked.iter().filter(|i| truth.binary_search(i).is_ok()).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Binary-relevance NDCG with `1 / log2(position + 1)` discounts (1-based
/// positions). The ideal DCG uses `min(K, |truth|)` hits where `K = ranked.len()`.
pub fn ndcg_at_k(ranked: &[usize], ground_truth: &[usize]) -> Result<f64, EvalError> {
    let truth = as_set(ground_truth)?;
    let discount = |pos: usize| 1.0 / ((pos + 1) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .enumerate()
        .filter(|(_, i)| truth.binary_search(i).is_ok())
        .map(|(p, _)| discount(p + 1))
        .sum();
    let ideal: f64 = (1..=ranked.len().min(truth.len())).map(discount).sum();
    Ok(if ideal > 0.0 { dcg / ideal } else { 0.0 })
}

/// Per-user `(user, recall, ndcg)` for every user with held-out items in `split`.
pub fn per_user_metrics<S: Scorer + ?Sized>(
    scorer: &S,
    dataset: &InteractionDataset,
    split: Split,
    k: usize,
    policy: ExclusionPolicy,
) -> Vec<(usize, f64, f64)> {
    let truth = dataset.ground_truth(split);
    let users: Vec<usize> = (0..dataset.n_users).filter(|&u| !truth[u].is_empty()).collect();
    users
        .par_iter()
        .map_init(
            || vec![0.0; dataset.n_items],
            |scores, &u| {
                scorer.score_all(u, scores);
                let excluded = policy.items(dataset, u);
                let available = dataset.n_items - excluded.len();
                let ranked = top_k(scores, excluded, k.min(available)).expect("k clamped to available");
                let gt = &truth[u];
                (
                    u,
                    recall_at_k(&ranked, gt).expect("nonempty"),
                    ndcg_at_k(&ranked, gt).expect("nonempty"),
                )
            },
        )
        .collect()
}

/// Macro-averaged Recall@K and NDCG@K over users with held-out items in `split`.
/// The average is reduced in user order.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    dataset: &InteractionDataset,
    split: Split,
    k: usize,
    policy: ExclusionPolicy,
) -> MetricReport {
    let rows = per_user_metrics(scorer, dataset, split, k, policy);
    let n = rows.len();
    let (recall, ndcg) = rows
        .iter()
        .fold((0.0, 0.0), |(r, g), &(_, ur, ug)| (r + ur, g + ug));
    let denom = n.max(1) as f64;
    MetricReport {
        epoch: 0,
        split,
        recall: recall / denom,
        ndcg: ndcg / denom,
        users_evaluated: n,
    }
}
