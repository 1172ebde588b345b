//! Pairwise losses over triplet batches and their analytic gradients.

use std::collections::BTreeSet;

use crate::model::{EmbeddingTable, RowKind, ScoringModel, SparseGrad};
use crate::prefcurve::{delta_sigma, softplus, PreferenceCurve};
use crate::sampling::TripletBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Bpr,
    HardBpr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Used only by [`LossKind::HardBpr`].
    pub curve: PreferenceCurve,
    pub l2: f64,
}

impl LossConfig {
    pub fn bpr(l2: f64) -> Self {
        Self {
            kind: LossKind::Bpr,
            curve: PreferenceCurve::sigmoid(),
            l2,
        }
    }

    pub fn hard_bpr(curve: PreferenceCurve, l2: f64) -> Self {
        Self {
            kind: LossKind::HardBpr,
            curve,
            l2,
        }
    }

    /// Per-triple loss `-ln P(i >_u j)` at margin `x`.
    #[inline]
    pub fn pair_loss(&self, x: f64) -> f64 {
        match self.kind {
            LossKind::Bpr => softplus(-x),
            LossKind::HardBpr => self.curve.neg_log_g(x),
        }
    }

    /// Gradient magnitude at margin `x`: the loss derivative is `-magnitude(x)`.
    #[inline]
    pub fn magnitude(&self, x: f64) -> f64 {
        match self.kind {
            LossKind::Bpr => delta_sigma(x),
            LossKind::HardBpr => self.curve.delta_g(x),
        }
    }
}

/// `f(i|u) - f(j|u)`.
#[inline]
pub fn pairwise_margin(view: &EmbeddingTable, u: usize, i: usize, j: usize) -> f64 {
    view.score(u, i) - view.score(u, j)
}

fn touched_rows(batch: &TripletBatch) -> BTreeSet<(RowKind, usize)> {
    let mut rows = BTreeSet::new();
    for &(u, i, j) in &batch.triples {
        rows.insert((RowKind::User, u));
        rows.insert((RowKind::Item, i));
        rows.insert((RowKind::Item, j));
    }
    rows
}

fn l2_penalty(base: &EmbeddingTable, rows: &BTreeSet<(RowKind, usize)>, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let sq: f64 = rows
        .iter()
        .map(|&(k, idx)| base.row(k, idx).iter().map(|x| x * x).sum::<f64>())
        .sum();
    0.5 * l2 * sq
}

/// Loss value and gradient of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStep {
    pub loss: f64,
    pub grads: SparseGrad,
    /// Largest per-triple gradient magnitude in the batch.
    pub max_magnitude: f64,
}

/// Loss and gradient w.r.t. the scoring embeddings `view`, for triples scored on
/// `view`. L2 is left out; it acts on the base rows.
fn data_term(batch: &TripletBatch, view: &EmbeddingTable, loss: &LossConfig) -> (f64, SparseGrad, f64) {
    let d = view.dim();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut max_mag = 0.0f64;
    let mut grads = SparseGrad::new(d);
    let mut diff = vec![0.0; d];
    for &(u, i, j) in &batch.triples {
        let x = pairwise_margin(view, u, i, j);
        total += loss.pair_loss(x);
        let mag = loss.magnitude(x);
        max_mag = max_mag.max(mag);
        if mag == 0.0 {
            continue;
        }
        let w = mag * scale;
        let (eu, ei, ej) = (view.user(u), view.item(i), view.item(j));
        for ((dk, a), b) in diff.iter_mut().zip(ei).zip(ej) {
            *dk = a - b;
        }
        grads.add_scaled(RowKind::User, u, -w, &diff);
        grads.add_scaled(RowKind::Item, i, -w, eu);
        grads.add_scaled(RowKind::Item, j, w, eu);
    }
    (total * scale, grads, max_mag)
}

/// Loss and gradient of a batch on `model`.
///
/// `view` must be `model.scoring_view()`; callers that already hold it pass it in
/// to avoid propagating twice.
pub fn loss_and_gradients(
    batch: &TripletBatch,
    model: &ScoringModel,
    view: &EmbeddingTable,
    loss: &LossConfig,
) -> BatchStep {
    assert!(!batch.is_empty(), "empty batch");
    let (data_loss, view_grads, max_magnitude) = data_term(batch, view, loss);
    let base = &model.table;
    let mut grads = match &model.graph {
        None => view_grads,
        Some(graph) => {
            let mut dense = EmbeddingTable::zeros(base.n_users(), base.n_items(), base.dim());
            for (kind, idx, g) in view_grads.iter() {
                dense.row_mut(kind, idx).copy_from_slice(g);
            }
            let pulled = graph.pull_back(&dense);
            let mut sparse = SparseGrad::new(base.dim());
            for (kind, n) in [(RowKind::User, base.n_users()), (RowKind::Item, base.n_items())] {
                for idx in 0..n {
                    let row = pulled.row(kind, idx);
                    if row.iter().any(|&x| x != 0.0) {
                        sparse.add_scaled(kind, idx, 1.0, row);
                    }
                }
            }
            sparse
        }
    };
    let rows = touched_rows(batch);
    if loss.l2 != 0.0 {
        for &(kind, idx) in &rows {
            grads.add_scaled(kind, idx, loss.l2, base.row(kind, idx));
        }
    }
    BatchStep {
        loss: data_loss + l2_penalty(base, &rows, loss.l2),
        grads,
        max_magnitude,
    }
}

/// Mean per-triple loss plus `l2/2 · Σ‖row‖²` over the distinct base rows the
/// batch touches.
pub fn batch_loss(batch: &TripletBatch, model: &ScoringModel, loss: &LossConfig) -> f64 {
    assert!(!batch.is_empty(), "empty batch");
    let view = model.scoring_view();
    let data: f64 = batch
        .triples
        .iter()
        .map(|&(u, i, j)| loss.pair_loss(pairwise_margin(&view, u, i, j)))
        .sum::<f64>()
        / batch.len() as f64;
    data + l2_penalty(&model.table, &touched_rows(batch), loss.l2)
}

/// Gradient of [`batch_loss`] with respect to the base embeddings.
pub fn batch_gradients(batch: &TripletBatch, model: &ScoringModel, loss: &LossConfig) -> SparseGrad {
    let view = model.scoring_view();
    loss_and_gradients(batch, model, &view, loss).grads
}

/// Gradient magnitude applied to each triple.
pub fn triple_magnitudes(batch: &TripletBatch, view: &EmbeddingTable, loss: &LossConfig) -> Vec<f64> {
    batch
        .triples
        .iter()
        .map(|&(u, i, j)| loss.magnitude(pairwise_margin(view, u, i, j)))
        .collect()
}
