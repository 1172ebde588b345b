use super::EmbeddingTable;
use crate::data::InteractionDataset;

/// Compressed adjacency lists for one side of the bipartite graph.
#[derive(Debug, Clone, PartialEq)]
struct Csr {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl Csr {
    fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.neighbors[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }
}

/// Symmetrically normalized user-item adjacency `Â` with layer-mean combination:
/// `E^(l+1) = Â E^(l)`, output `mean(E^(0), ..., E^(L))`. No self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPropagation {
    n_layers: usize,
    user_side: Csr,
    item_side: Csr,
}

impl GraphPropagation {
    /// Builds `Â` from the training interactions only; each edge weight is
    /// `1 / sqrt(deg(u) · deg(i))`.
    pub fn from_train(dataset: &InteractionDataset, n_layers: usize) -> Self {
        Self::from_edges(dataset.n_users, dataset.n_items, &dataset.train, n_layers)
    }

    pub fn from_edges(n_users: usize, n_items: usize, edges: &[(usize, usize)], n_layers: usize) -> Self {
        let mut edges = edges.to_vec();
        edges.sort_unstable();
        edges.dedup();
        let mut user_deg = vec![0usize; n_users];
        let mut item_deg = vec![0usize; n_items];
        for &(u, i) in &edges {
            user_deg[u] += 1;
            item_deg[i] += 1;
        }
        let weight = |u: usize, i: usize| 1.0 / ((user_deg[u] * item_deg[i]) as f64).sqrt();
        let build = |n_rows: usize, pairs: &[(usize, usize)], w: &dyn Fn(usize, usize) -> f64| {
            let mut offsets = vec![0usize; n_rows + 1];
            for &(r, _) in pairs {
                offsets[r + 1] += 1;
            }
            for k in 0..n_rows {
                offsets[k + 1] += offsets[k];
            }
            Csr {
                offsets,
                neighbors: pairs.iter().map(|&(_, c)| c).collect(),
                weights: pairs.iter().map(|&(r, c)| w(r, c)).collect(),
            }
        };
        let user_side = build(n_users, &edges, &weight);
        let mut by_item: Vec<(usize, usize)> = edges.iter().map(|&(u, i)| (i, u)).collect();
        by_item.sort_unstable();
        let item_side = build(n_items, &by_item, &|i, u| weight(u, i));
        Self {
            n_layers,
            user_side,
            item_side,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    /// Nonzeros of `Â` in user row `u`, as `(item, weight)`.
    pub fn user_row(&self, u: usize) -> Vec<(usize, f64)> {
        self.user_side.row(u).collect()
    }

    /// Nonzeros of `Â` in item row `i`, as `(user, weight)`.
    pub fn item_row(&self, i: usize) -> Vec<(usize, f64)> {
        self.item_side.row(i).collect()
    }

    fn apply_adjacency(&self, x: &EmbeddingTable) -> EmbeddingTable {
        let d = x.dim();
        let mut out = EmbeddingTable::zeros(x.n_users(), x.n_items(), d);
        {
            let (out_users, out_items) = out.matrices_mut();
            for (u, dst) in out_users.chunks_exact_mut(d).enumerate() {
                for (i, w) in self.user_side.row(u) {
                    for (o, v) in dst.iter_mut().zip(x.item(i)) {
                        *o += w * v;
                    }
                }
            }
            for (i, dst) in out_items.chunks_exact_mut(d).enumerate() {
                for (u, w) in self.item_side.row(i) {
                    for (o, v) in dst.iter_mut().zip(x.user(u)) {
                        *o += w * v;
                    }
                }
            }
        }
        out
    }

    /// Layer-averaged propagation of `table`.
    pub fn propagate(&self, table: &EmbeddingTable) -> EmbeddingTable {
        if self.n_layers == 0 {
            return table.clone();
        }
        let mut acc = table.clone();
        let mut layer = table.clone();
        for _ in 0..self.n_layers {
            layer = self.apply_adjacency(&layer);
            acc = acc.linear_combination(1.0, &layer, 1.0);
        }
        acc.scale(1.0 / (self.n_layers + 1) as f64);
        acc
    }

    /// Pulls a gradient on propagated embeddings back to the base embeddings,
    /// i.e. multiplies by the transpose of the layer-averaged operator. `Â` is
    /// symmetric, so every power of it is too, and the transpose equals the
    /// forward operator.
    pub fn pull_back(&self, grad_on_output: &EmbeddingTable) -> EmbeddingTable {
        self.propagate(grad_on_output)
    }
}
