#![allow(dead_code)]

use hardrank_core::data::{generate_synthetic, InteractionDataset, Split, SyntheticSpec};
use hardrank_core::model::{GraphPropagation, RowKind};
use hardrank_core::sampling::{build_batch, SamplerConfig, TripletBatch};
use hardrank_core::training::{batch_gradients, batch_loss, LossConfig};
use hardrank_core::{EmbeddingTable, ScoringModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_dataset(n_users: usize, n_items: usize, per_user: usize, seed: u64) -> InteractionDataset {
    generate_synthetic(&SyntheticSpec {
        n_users,
        n_items,
        latent_dim: 4,
        interactions_per_user: per_user,
        false_negative_fraction: 0.2,
        noise_level: 0.1,
        seed,
    })
    .unwrap()
    .dataset
}

pub fn model_of(kind: &str, ds: &InteractionDataset, dim: usize, seed: u64) -> ScoringModel {
    let table = EmbeddingTable::init(ds.n_users, ds.n_items, dim, seed);
    match kind {
        "mf" => ScoringModel::mf(table),
        _ => ScoringModel::light_gcn(table, GraphPropagation::from_train(ds, 2)),
    }
}

/// Random RNS batch over a random subset of the train pairs.
pub fn random_batch(ds: &InteractionDataset, size: usize, seed: u64) -> TripletBatch {
    let mut r = rng(seed);
    let positives: Vec<(usize, usize)> = (0..size)
        .map(|_| ds.train[r.random_range(0..ds.train.len())])
        .collect();
    let table = EmbeddingTable::zeros(ds.n_users, ds.n_items, 1);
    build_batch(ds, &table, &positives, &SamplerConfig::rns(seed), 0).unwrap()
}

/// Largest relative error between the analytic gradient and central finite
/// differences of `batch_loss` over `n` random entries of rows the gradient touches.
pub fn finite_difference_error(
    model: &ScoringModel,
    batch: &TripletBatch,
    loss: &LossConfig,
    n: usize,
    seed: u64,
) -> f64 {
    let grads = batch_gradients(batch, model, loss);
    let rows: Vec<(RowKind, usize)> = grads.iter().map(|(k, i, _)| (k, i)).collect();
    let dim = model.table.dim();
    let mut r = rng(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (kind, idx) = rows[r.random_range(0..rows.len())];
        let k = r.random_range(0..dim);
        let analytic = grads.get(kind, idx).unwrap()[k];
        let mut plus = model.clone();
        plus.table.row_mut(kind, idx)[k] += h;
        let mut minus = model.clone();
        minus.table.row_mut(kind, idx)[k] -= h;
        let fd = (batch_loss(batch, &plus, loss) - batch_loss(batch, &minus, loss)) / (2.0 * h);
        let scale = analytic.abs().max(fd.abs()).max(1e-8);
        worst = worst.max((analytic - fd).abs() / scale);
    }
    worst
}

/// Full sort, then filter: the reference ranking.
pub fn oracle_rank(scores: &[f64], exclusion: &[usize], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|i| !exclusion.contains(i)).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Per-user recomputation with no shared code paths beyond `Scorer::score`.
pub fn brute_force_evaluate(
    table: &EmbeddingTable,
    ds: &InteractionDataset,
    split: Split,
    k: usize,
    exclude_val: bool,
) -> (f64, f64) {
    let mut sums = (0.0, 0.0);
    let mut users = 0;
    for u in 0..ds.n_users {
        let truth: Vec<usize> = ds.split(split).iter().filter(|p| p.0 == u).map(|p| p.1).collect();
        if truth.is_empty() {
            continue;
        }
        let mut excluded: Vec<usize> = ds.train.iter().filter(|p| p.0 == u).map(|p| p.1).collect();
        if exclude_val {
            excluded.extend(ds.val.iter().filter(|p| p.0 == u).map(|p| p.1));
        }
        let scores: Vec<f64> = (0..ds.n_items).map(|i| table.score(u, i)).collect();
        let ranked = oracle_rank(&scores, &excluded, k);
        let hits: Vec<usize> = (0..ranked.len()).filter(|&p| truth.contains(&ranked[p])).collect();
        let dcg: f64 = hits.iter().map(|&p| 1.0 / ((p + 2) as f64).log2()).sum();
        let idcg: f64 = (0..ranked.len().min(truth.len())).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
        sums.0 += hits.len() as f64 / truth.len() as f64;
        sums.1 += dcg / idcg;
        users += 1;
    }
    (sums.0 / users as f64, sums.1 / users as f64)
}
