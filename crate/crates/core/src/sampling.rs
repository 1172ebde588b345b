//! Negative samplers: uniform (RNS) and dynamic hard negative selection (DNS).
//!
//! DNS draws a pool of `H` legal negatives for a positive pair and keeps the one
//! the current model scores highest. Every row of a batch gets its own RNG stream
//! derived from `(seed, batch index, row)`, so batches are identical whether rows
//! are sampled sequentially or in parallel.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::InteractionDataset;
use crate::model::Scorer;
use crate::seed;

pub const DEFAULT_REJECTION_CAP: usize = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplingError {
    #[error("user {user} has interacted with every item; no negative available")]
    NoNegativeAvailable { user: usize },
    #[error("pool size must be at least 1")]
    EmptyPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Rns,
    Dns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Candidate pool size `H`; ignored by RNS.
    pub pool_size: usize,
    pub seed: u64,
    pub rejection_cap: usize,
}

impl SamplerConfig {
    pub fn rns(seed: u64) -> Self {
        Self {
            kind: SamplerKind::Rns,
            pool_size: 1,
            seed,
            rejection_cap: DEFAULT_REJECTION_CAP,
        }
    }

    pub fn dns(pool_size: usize, seed: u64) -> Self {
        Self {
            kind: SamplerKind::Dns,
            pool_size,
            seed,
            rejection_cap: DEFAULT_REJECTION_CAP,
        }
    }

    /// Model scorings per positive pair.
    pub fn scorings_per_pair(&self) -> usize {
        match self.kind {
            SamplerKind::Rns => 0,
            SamplerKind::Dns => self.pool_size,
        }
    }
}

/// `(user, positive item, negative item)` triples for one optimization step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripletBatch {
    pub triples: Vec<(usize, usize, usize)>,
    /// Highest pool score per triple (DNS only).
    pub pool_scores: Option<Vec<f64>>,
}

impl TripletBatch {
    pub fn new(triples: Vec<(usize, usize, usize)>) -> Self {
        Self {
            triples,
            pool_scores: None,
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Uniform draw from `I \ I⁺(u)` with the default rejection cap.
pub fn sample_uniform_negative<R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    u: usize,
    rng: &mut R,
) -> Result<usize, SamplingError> {
    sample_uniform_negative_capped(dataset, u, rng, DEFAULT_REJECTION_CAP)
}

/// Uniform draw from `I \ I⁺(u)`: rejection sampling for up to `rejection_cap`
/// tries, then an exact draw from the enumerated complement.
pub fn sample_uniform_negative_capped<R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    u: usize,
    rng: &mut R,
    rejection_cap: usize,
) -> Result<usize, SamplingError> {
    let positives = &dataset.train_positive_sets[u];
    let n_items = dataset.n_items;
    if positives.len() >= n_items {
        return Err(SamplingError::NoNegativeAvailable { user: u });
    }
    for _ in 0..rejection_cap {
        let j = rng.random_range(0..n_items);
        if positives.binary_search(&j).is_err() {
            return Ok(j);
        }
    }
    // complement enumeration: the k-th legal item, skipping the sorted positives
    let mut k = rng.random_range(0..n_items - positives.len());
    let mut prev = 0;
    for &p in positives {
        let gap = p - prev;
        if k < gap {
            return Ok(prev + k);
        }
        k -= gap;
        prev = p + 1;
    }
    Ok(prev + k)
}

/// Result of one DNS selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DnsSelection {
    pub negative: usize,
    pub pool: Vec<usize>,
    pub pool_scores: Vec<f64>,
}

impl DnsSelection {
    pub fn max_score(&self) -> f64 {
        self.pool_scores[argmax_first(&self.pool_scores)]
    }
}

/// Index of the largest value; ties go to the earliest position.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// DNS: draws `pool_size` legal negatives independently (with replacement),
/// scores them and returns the highest-scored one.
pub fn sample_dns_negative<S: Scorer + ?Sized, R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    scorer: &S,
    u: usize,
    pool_size: usize,
    rng: &mut R,
) -> Result<DnsSelection, SamplingError> {
    sample_dns_negative_capped(dataset, scorer, u, pool_size, rng, DEFAULT_REJECTION_CAP)
}

pub fn sample_dns_negative_capped<S: Scorer + ?Sized, R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    scorer: &S,
    u: usize,
    pool_size: usize,
    rng: &mut R,
    rejection_cap: usize,
) -> Result<DnsSelection, SamplingError> {
    if pool_size == 0 {
        return Err(SamplingError::EmptyPool);
    }
    let pool = (0..pool_size)
        .map(|_| sample_uniform_negative_capped(dataset, u, rng, rejection_cap))
        .collect::<Result<Vec<_>, _>>()?;
    let pool_scores: Vec<f64> = pool.iter().map(|&j| scorer.score(u, j)).collect();
    let negative = pool[argmax_first(&pool_scores)];
    Ok(DnsSelection {
        negative,
        pool,
        pool_scores,
    })
}

/// Per-row stream of a batch.
pub fn row_rng(config: &SamplerConfig, batch_index: u64, row: usize) -> seed::StreamRng {
    seed::stream(config.seed, "sampler", &[batch_index, row as u64])
}

/// One negative per positive pair via the configured sampler.
pub fn build_batch<S: Scorer + ?Sized>(
    dataset: &InteractionDataset,
    scorer: &S,
    positives: &[(usize, usize)],
    config: &SamplerConfig,
    batch_index: u64,
) -> Result<TripletBatch, SamplingError> {
    match config.kind {
        SamplerKind::Rns => {
            let triples = positives
                .par_iter()
                .enumerate()
                .map(|(row, &(u, i))| {
                    let mut rng = row_rng(config, batch_index, row);
                    let j = sample_uniform_negative_capped(dataset, u, &mut rng, config.rejection_cap)?;
                    Ok((u, i, j))
                })
                .collect::<Result<Vec<_>, SamplingError>>()?;
            Ok(TripletBatch::new(triples))
        }
        SamplerKind::Dns => {
            let rows = positives
                .par_iter()
                .enumerate()
                .map(|(row, &(u, i))| {
                    let mut rng = row_rng(config, batch_index, row);
                    let sel = sample_dns_negative_capped(
                        dataset,
                        scorer,
                        u,
                        config.pool_size,
                        &mut rng,
                        config.rejection_cap,
                    )?;
                    Ok(((u, i, sel.negative), sel.max_score()))
                })
                .collect::<Result<Vec<_>, SamplingError>>()?;
            let (triples, scores) = rows.into_iter().unzip();
            Ok(TripletBatch {
                triples,
                pool_scores: Some(scores),
            })
        }
    }
}
