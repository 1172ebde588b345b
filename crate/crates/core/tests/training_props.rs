mod common;

use common::{model_of, random_batch, small_dataset};
use hardrank_core::sampling::{build_batch, SamplerConfig};
use hardrank_core::training::{
    adam_step, batch_gradients, batch_loss, loss_and_gradients, train, triple_magnitudes,
    OptimizerState, TrainConfig,
};
use hardrank_core::{EmbeddingTable, LossConfig, PreferenceCurve, ScoringModel};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sigmoid_curve_is_bitwise_bpr(seed in 0..100_000u64, l2 in prop::sample::select(vec![0.0, 1e-4, 0.01, 0.1]), gnn in any::<bool>()) {
        let ds = small_dataset(25, 50, 10, seed % 5);
        let model = model_of(if gnn { "lightgcn" } else { "mf" }, &ds, 6, seed);
        let batch = random_batch(&ds, 40, seed);
        let bpr = LossConfig::bpr(l2);
        let hard = LossConfig::hard_bpr(PreferenceCurve::new(0.0, 0.0, 1.0).unwrap(), l2);
        prop_assert_eq!(batch_loss(&batch, &model, &bpr).to_bits(), batch_loss(&batch, &model, &hard).to_bits());
        prop_assert_eq!(batch_gradients(&batch, &model, &bpr), batch_gradients(&batch, &model, &hard));
    }

    #[test]
    fn applied_magnitude_never_exceeds_peak(seed in 0..100_000u64, a in 1e-3..10.0f64, b in -10.0..10.0f64, c in 0.05..5.0f64, spread in 0.1..20.0f64) {
        let ds = small_dataset(20, 40, 10, seed % 3);
        let mut table = EmbeddingTable::init(ds.n_users, ds.n_items, 4, seed);
        // widen the margin distribution so both tails of the curve are visited
        table.scale(spread);
        let batch = random_batch(&ds, 60, seed);
        let curve = PreferenceCurve::new(a, b, c).unwrap();
        let peak = curve.extremum().unwrap().delta_max;
        for m in triple_magnitudes(&batch, &table, &LossConfig::hard_bpr(curve, 0.0)) {
            prop_assert!(m <= peak + 1e-12, "magnitude {m} above peak {peak}");
        }
    }
}

#[test]
fn frozen_batch_loss_is_nonincreasing() {
    let ds = small_dataset(20, 40, 10, 8);
    for loss in [
        LossConfig::bpr(0.001),
        LossConfig::hard_bpr(PreferenceCurve::new(1.0, -1.0, 0.8).unwrap(), 0.001),
    ] {
        for kind in ["mf", "lightgcn"] {
            let mut model = model_of(kind, &ds, 8, 1);
            let table = EmbeddingTable::init(ds.n_users, ds.n_items, 8, 2);
            let batch = build_batch(&ds, &table, &ds.train, &SamplerConfig::dns(4, 5), 0).unwrap();
            let mut state = OptimizerState::new(&model.table, 1e-4);
            let mut prev = batch_loss(&batch, &model, &loss);
            for step in 0..50 {
                let view = model.scoring_view().into_owned();
                let g = loss_and_gradients(&batch, &model, &view, &loss).grads;
                adam_step(&mut state, &mut model.table, &g);
                let now = batch_loss(&batch, &model, &loss);
                assert!(now <= prev + 1e-6, "{kind} step {step}: {prev} -> {now}");
                prev = now;
            }
        }
    }
}

fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 128,
        learning_rate: 0.01,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn identical_runs_give_identical_checkpoints_and_metrics() {
    let ds = small_dataset(60, 120, 15, 2);
    let loss = LossConfig::hard_bpr(PreferenceCurve::new(1.0, 0.0, 1.0).unwrap(), 0.001);
    for kind in ["mf", "lightgcn"] {
        let run = || {
            train(&ds, model_of(kind, &ds, 8, 4), &SamplerConfig::dns(8, 4), &loss, &quick_config(4)).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.best_model.table.to_bytes(), b.best_model.table.to_bytes());
        assert_eq!(a.final_model.table.to_bytes(), b.final_model.table.to_bytes());
        let strip = |o: &hardrank_core::training::TrainOutcome| {
            o.records.iter().map(|r| (r.report, r.mean_loss.to_bits())).collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.records.len(), 8);
    }
}

#[test]
fn zero_epochs_returns_initial_model() {
    let ds = small_dataset(30, 60, 10, 1);
    let model = ScoringModel::mf(EmbeddingTable::init(ds.n_users, ds.n_items, 8, 0));
    let out = train(&ds, model.clone(), &SamplerConfig::rns(0), &LossConfig::bpr(0.0), &quick_config(0)).unwrap();
    assert!(out.records.is_empty() && out.epochs.is_empty());
    assert_eq!(out.best_model.table, model.table);
    assert_eq!(out.final_model.table, model.table);
    assert!(out.best_val.is_none());
}

#[test]
fn best_checkpoint_tracks_best_validation_recall() {
    let ds = small_dataset(60, 120, 15, 6);
    let out = train(
        &ds,
        model_of("mf", &ds, 8, 1),
        &SamplerConfig::dns(8, 1),
        &LossConfig::bpr(0.0),
        &quick_config(8),
    )
    .unwrap();
    let vals = out.recall_curve(hardrank_core::data::Split::Val);
    let best = vals.iter().map(|v| v.1).fold(f64::MIN, f64::max);
    assert_eq!(out.best_val.unwrap().recall, best);
    let first_best = vals.iter().find(|v| v.1 == best).unwrap().0;
    assert_eq!(out.best_epoch, first_best);
}
