mod common;

use common::{finite_difference_error, model_of, random_batch, small_dataset};
use hardrank_core::model::GraphPropagation;
use hardrank_core::training::LossConfig;
use hardrank_core::{EmbeddingTable, PreferenceCurve};
use proptest::prelude::*;

#[test]
fn gradients_match_finite_differences() {
    let ds = small_dataset(40, 80, 10, 3);
    let losses = [
        LossConfig::bpr(0.0),
        LossConfig::bpr(0.01),
        LossConfig::hard_bpr(PreferenceCurve::new(1.0, -1.0, 0.8).unwrap(), 0.01),
        LossConfig::hard_bpr(PreferenceCurve::new(4.0, 2.0, 3.0).unwrap(), 0.0),
    ];
    for kind in ["mf", "lightgcn"] {
        for (n, loss) in losses.iter().enumerate() {
            let model = model_of(kind, &ds, 8, n as u64);
            let batch = random_batch(&ds, 64, 10 + n as u64);
            let err = finite_difference_error(&model, &batch, loss, 20, n as u64);
            assert!(err < 1e-4, "{kind} loss #{n}: relative error {err}");
        }
    }
}

fn table_strategy() -> impl Strategy<Value = (EmbeddingTable, EmbeddingTable)> {
    (1..5usize, 1..6usize, 1..4usize).prop_flat_map(|(nu, ni, d)| {
        let n = (nu + ni) * d;
        (
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(move |(x, y)| {
                (
                    EmbeddingTable::from_rows(d, x[..nu * d].to_vec(), x[nu * d..].to_vec()),
                    EmbeddingTable::from_rows(d, y[..nu * d].to_vec(), y[nu * d..].to_vec()),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagation_is_linear((x, y) in table_strategy(), a in -3.0..3.0f64, b in -3.0..3.0f64, layers in 0..4usize, seed in 0..1000u64) {
        let (nu, ni) = (x.n_users(), x.n_items());
        let edges: Vec<(usize, usize)> = (0..nu)
            .flat_map(|u| (0..ni).map(move |i| (u, i)))
            .filter(|&(u, i)| (u * 31 + i * 17 + seed as usize) % 3 != 0)
            .collect();
        let graph = GraphPropagation::from_edges(nu, ni, &edges, layers);
        let lhs = graph.propagate(&x.linear_combination(a, &y, b));
        let rhs = graph.propagate(&x).linear_combination(a, &graph.propagate(&y), b);
        for (l, r) in lhs.user_matrix().iter().chain(lhs.item_matrix()).zip(rhs.user_matrix().iter().chain(rhs.item_matrix())) {
            prop_assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn mf_score_is_bilinear((x, _) in table_strategy(), alpha in -5.0..5.0f64) {
        let mut scaled = x.clone();
        for u in 0..x.n_users() {
            for v in scaled.row_mut(hardrank_core::model::RowKind::User, u) {
                *v *= alpha;
            }
        }
        for u in 0..x.n_users() {
            for i in 0..x.n_items() {
                prop_assert!((scaled.score(u, i) - alpha * x.score(u, i)).abs() < 1e-12);
            }
        }
    }
}
