//! Loss assembly, Adam and the epoch loop.
//!
//! Each epoch shuffles the training pairs, then for every mini-batch: samples one
//! negative per pair (RNS or DNS), computes the loss gradient on the touched
//! rows and applies a lazy Adam step. Every `eval_every` epochs the model is
//! scored on validation and test; the best validation Recall@K checkpoint wins.

mod adam;
mod loss;

pub use adam::{adam_step, OptimizerState, BETA1, BETA2, EPSILON};
pub use loss::{
    batch_gradients, batch_loss, loss_and_gradients, pairwise_margin, triple_magnitudes, BatchStep,
    LossConfig, LossKind,
};

use std::time::Instant;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::data::{InteractionDataset, Split};
use crate::eval::{evaluate, ExclusionPolicy, MetricReport};
use crate::model::{CountingScorer, ScoringModel};
use crate::sampling::{build_batch, SamplerConfig, SamplingError};
use crate::seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("sampling failed: {0}")]
    Sampling(#[from] SamplingError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: non-finite embeddings")]
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    /// Evaluations without a validation improvement before stopping.
    pub early_stop_patience: usize,
    /// Top-K used for model selection and reporting.
    pub k: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Exclude validation positives when ranking for test metrics.
    pub test_excludes_val: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 2048,
            eval_every: 1,
            early_stop_patience: 10,
            k: 50,
            learning_rate: 0.001,
            seed: 0,
            test_excludes_val: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn test_policy(&self) -> ExclusionPolicy {
        if self.test_excludes_val {
            ExclusionPolicy::TrainAndVal
        } else {
            ExclusionPolicy::TrainOnly
        }
    }
}

/// One row of the metric CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub report: MetricReport,
    pub mean_loss: f64,
    pub elapsed_ms: u128,
}

impl MetricRecord {
    pub fn csv_header(k: usize) -> String {
        format!("epoch,split,recall_at_{k},ndcg_at_{k},mean_loss,elapsed_ms")
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{}",
            self.report.epoch,
            self.report.split,
            self.report.recall,
            self.report.ndcg,
            self.mean_loss,
            self.elapsed_ms
        )
    }
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Model scorings performed by the sampler.
    pub scorings: u64,
    /// Largest per-triple gradient magnitude seen.
    pub max_magnitude: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model at the best validation Recall@K (the initial model if never evaluated).
    pub best_model: ScoringModel,
    pub final_model: ScoringModel,
    pub best_epoch: usize,
    pub best_val: Option<MetricReport>,
    pub records: Vec<MetricRecord>,
    pub epochs: Vec<EpochStats>,
}

impl TrainOutcome {
    /// `(epoch, recall)` of the chosen split, in evaluation order.
    pub fn recall_curve(&self, split: Split) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.report.split == split)
            .map(|r| (r.report.epoch, r.report.recall))
            .collect()
    }

    /// Test metrics recorded at the best validation epoch.
    pub fn test_at_best(&self) -> Option<MetricReport> {
        self.records
            .iter()
            .find(|r| r.report.split == Split::Test && r.report.epoch == self.best_epoch)
            .map(|r| r.report)
    }
}

/// Runs the training loop. Deterministic given the configs and the initial model.
pub fn train(
    dataset: &InteractionDataset,
    model: ScoringModel,
    sampler: &SamplerConfig,
    loss: &LossConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if loss.l2 < 0.0 || !loss.l2.is_finite() {
        return Err(TrainError::Config("l2 must be finite and >= 0".into()));
    }
    if dataset.train.is_empty() {
        return Err(TrainError::Config("training split is empty".into()));
    }
    let started = Instant::now();
    let mut model = model;
    let mut state = OptimizerState::new(&model.table, cfg.learning_rate);
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut best_val: Option<MetricReport> = None;
    let mut evals_without_gain = 0;
    let mut records = Vec::new();
    let mut epochs = Vec::new();
    let mut pairs = dataset.train.clone();
    let n_batches = pairs.len().div_ceil(cfg.batch_size) as u64;

    for epoch in 1..=cfg.epochs {
        pairs.clone_from(&dataset.train);
        pairs.shuffle(&mut seed::stream(cfg.seed, "train/shuffle", &[epoch as u64]));
        let mut loss_sum = 0.0;
        let mut scorings = 0;
        let mut max_magnitude = 0.0f64;
        for (b, chunk) in pairs.chunks(cfg.batch_size).enumerate() {
            let view = model.scoring_view();
            let batch_index = (epoch as u64 - 1) * n_batches + b as u64;
            let counter = CountingScorer::new(view.as_ref());
            let batch = build_batch(dataset, &counter, chunk, sampler, batch_index)?;
            scorings += counter.count();
            let step = loss_and_gradients(&batch, &model, &view, loss);
            drop(view);
            loss_sum += step.loss * chunk.len() as f64;
            max_magnitude = max_magnitude.max(step.max_magnitude);
            adam_step(&mut state, &mut model.table, &step.grads);
        }
        if !model.table.all_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let mean_loss = loss_sum / pairs.len() as f64;
        epochs.push(EpochStats {
            epoch,
            mean_loss,
            scorings,
            max_magnitude,
        });

        if epoch % cfg.eval_every != 0 {
            continue;
        }
        let view = model.scoring_view();
        let mut val = evaluate(view.as_ref(), dataset, Split::Val, cfg.k, ExclusionPolicy::TrainOnly);
        let mut test = evaluate(view.as_ref(), dataset, Split::Test, cfg.k, cfg.test_policy());
        drop(view);
        val.epoch = epoch;
        test.epoch = epoch;
        let elapsed_ms = started.elapsed().as_millis();
        for report in [val, test] {
            records.push(MetricRecord {
                report,
                mean_loss,
                elapsed_ms,
            });
        }
        if best_val.is_none_or(|b| val.recall > b.recall) {
            best_val = Some(val);
            best_epoch = epoch;
            best_model = model.clone();
            evals_without_gain = 0;
        } else {
            evals_without_gain += 1;
            if evals_without_gain >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        best_model,
        final_model: model,
        best_epoch,
        best_val,
        records,
        epochs,
    })
}
