//! Learnable scoring functions: matrix factorization and light graph
//! convolution over the user-item bipartite graph.

mod graph;

pub use graph::GraphPropagation;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, Normal};

use crate::seed;
use crate::training::{adam_step, OptimizerState};

/// Standard deviation of the initial embedding entries.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowKind {
    User,
    Item,
}

/// User and item embedding matrices, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    n_users: usize,
    n_items: usize,
    users: Vec<f64>,
    items: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(n_users: usize, n_items: usize, dim: usize) -> Self {
        Self {
            dim,
            n_users,
            n_items,
            users: vec![0.0; n_users * dim],
            items: vec![0.0; n_items * dim],
        }
    }

    /// Gaussian(0, 0.1²) entries from the seeded stream.
    pub fn init(n_users: usize, n_items: usize, dim: usize, seed: u64) -> Self {
        assert!(n_users > 0 && n_items > 0 && dim > 0, "dimensions must be positive");
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let mut rng = seed::stream(seed, "model/init", &[]);
        let mut table = Self::zeros(n_users, n_items, dim);
        for x in table.users.iter_mut().chain(table.items.iter_mut()) {
            *x = normal.sample(&mut rng);
        }
        table
    }

    pub fn from_rows(dim: usize, users: Vec<f64>, items: Vec<f64>) -> Self {
        assert!(dim > 0 && users.len() % dim == 0 && items.len() % dim == 0);
        Self {
            dim,
            n_users: users.len() / dim,
            n_items: items.len() / dim,
            users,
            items,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn user(&self, u: usize) -> &[f64] {
        &self.users[u * self.dim..(u + 1) * self.dim]
    }

    #[inline]
    pub fn item(&self, i: usize) -> &[f64] {
        &self.items[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row(&self, kind: RowKind, idx: usize) -> &[f64] {
        match kind {
            RowKind::User => self.user(idx),
            RowKind::Item => self.item(idx),
        }
    }

    #[inline]
    pub fn row_mut(&mut self, kind: RowKind, idx: usize) -> &mut [f64] {
        let d = self.dim;
        match kind {
            RowKind::User => &mut self.users[idx * d..(idx + 1) * d],
            RowKind::Item => &mut self.items[idx * d..(idx + 1) * d],
        }
    }

    pub fn user_matrix(&self) -> &[f64] {
        &self.users
    }

    pub fn item_matrix(&self) -> &[f64] {
        &self.items
    }

    pub(crate) fn matrices_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.users, &mut self.items)
    }

    /// Dot product of user `u` and item `i`.
    #[inline]
    pub fn score(&self, u: usize, i: usize) -> f64 {
        dot(self.user(u), self.item(i))
    }

    pub fn all_finite(&self) -> bool {
        self.users.iter().chain(&self.items).all(|x| x.is_finite())
    }

    /// `alpha * self + beta * other`, elementwise.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        assert_eq!((self.n_users, self.n_items, self.dim), (other.n_users, other.n_items, other.dim));
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| alpha * a + beta * b).collect();
        Self {
            dim: self.dim,
            n_users: self.n_users,
            n_items: self.n_items,
            users: mix(&self.users, &other.users),
            items: mix(&self.items, &other.items),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for x in self.users.iter_mut().chain(self.items.iter_mut()) {
            *x *= factor;
        }
    }

    const MAGIC: &'static [u8; 8] = b"HRKEMB01";

    /// Binary checkpoint: magic, then `n_users`, `n_items`, `dim` as little-endian
    /// u64, then all user rows and all item rows as little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(Self::MAGIC)?;
        for n in [self.n_users, self.n_items, self.dim] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for x in self.users.iter().chain(&self.items) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(32 + 8 * (self.users.len() + self.items.len()));
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "not an embedding checkpoint"));
        }
        let mut word = [0u8; 8];
        let mut header = [0usize; 3];
        for h in &mut header {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word) as usize;
        }
        let [n_users, n_items, dim] = header;
        if dim == 0 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "zero embedding dimension"));
        }
        let mut read_vec = |len: usize| -> io::Result<Vec<f64>> {
            (0..len)
                .map(|_| {
                    r.read_exact(&mut word)?;
                    Ok(f64::from_le_bytes(word))
                })
                .collect()
        };
        let users = read_vec(n_users * dim)?;
        let items = read_vec(n_items * dim)?;
        Ok(Self::from_rows(dim, users, items))
    }
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Anything that can score `(user, item)` pairs.
pub trait Scorer: Sync {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    fn score(&self, u: usize, i: usize) -> f64;

    /// Scores every item for user `u` into `out`.
    fn score_all(&self, u: usize, out: &mut [f64]) {
        for (i, s) in out.iter_mut().enumerate() {
            *s = self.score(u, i);
        }
    }
}

impl Scorer for EmbeddingTable {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    fn score(&self, u: usize, i: usize) -> f64 {
        EmbeddingTable::score(self, u, i)
    }

    fn score_all(&self, u: usize, out: &mut [f64]) {
        let pu = self.user(u);
        for (s, qi) in out.iter_mut().zip(self.items.chunks_exact(self.dim)) {
            *s = dot(pu, qi);
        }
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn n_users(&self) -> usize {
        (**self).n_users()
    }

    fn n_items(&self) -> usize {
        (**self).n_items()
    }

    fn score(&self, u: usize, i: usize) -> f64 {
        (**self).score(u, i)
    }

    fn score_all(&self, u: usize, out: &mut [f64]) {
        (**self).score_all(u, out)
    }
}

/// Wraps a scorer and counts every individual `(u, i)` scoring.
pub struct CountingScorer<S> {
    inner: S,
    count: AtomicU64,
}

impl<S: Scorer> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::Relaxed);
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn n_users(&self) -> usize {
        self.inner.n_users()
    }

    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    fn score(&self, u: usize, i: usize) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.score(u, i)
    }

    fn score_all(&self, u: usize, out: &mut [f64]) {
        self.count.fetch_add(out.len() as u64, Ordering::Relaxed);
        self.inner.score_all(u, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mf,
    LightGcn { n_layers: usize },
}

/// Base embeddings plus, for the graph model, the propagation operator.
#[derive(Debug, Clone)]
pub struct ScoringModel {
    pub table: EmbeddingTable,
    pub graph: Option<GraphPropagation>,
}

impl ScoringModel {
    pub fn mf(table: EmbeddingTable) -> Self {
        Self { table, graph: None }
    }

    pub fn light_gcn(table: EmbeddingTable, graph: GraphPropagation) -> Self {
        Self {
            table,
            graph: Some(graph),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match &self.graph {
            None => ModelKind::Mf,
            Some(g) => ModelKind::LightGcn { n_layers: g.n_layers() },
        }
    }

    /// Embeddings that scoring uses: the base table for MF, the layer-averaged
    /// propagated table for the graph model.
    pub fn scoring_view(&self) -> Cow<'_, EmbeddingTable> {
        match &self.graph {
            None => Cow::Borrowed(&self.table),
            Some(g) => Cow::Owned(g.propagate(&self.table)),
        }
    }
}

/// Trained base embeddings with the metadata needed to rebuild the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub seed: u64,
    pub table: EmbeddingTable,
}

impl Checkpoint {
    const MAGIC: &'static [u8; 8] = b"HRKCKPT1";

    pub fn new(model: &ScoringModel, seed: u64) -> Self {
        Self {
            kind: model.kind(),
            seed,
            table: model.table.clone(),
        }
    }

    /// Header (magic, kind code, layer count, seed as little-endian u64) followed
    /// by the embedding table dump.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (code, layers) = match self.kind {
            ModelKind::Mf => (0u64, 0u64),
            ModelKind::LightGcn { n_layers } => (1, n_layers as u64),
        };
        w.write_all(Self::MAGIC)?;
        for n in [code, layers, self.seed] {
            w.write_all(&n.to_le_bytes())?;
        }
        self.table.write_to(w)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> io::Result<Self> {
        let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(invalid("not a model checkpoint"));
        }
        let mut header = [0u64; 3];
        let mut word = [0u8; 8];
        for h in &mut header {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let kind = match header[0] {
            0 => ModelKind::Mf,
            1 => ModelKind::LightGcn { n_layers: header[1] as usize },
            other => return Err(invalid(&format!("unknown model kind code {other}"))),
        };
        let table = EmbeddingTable::read_from(r)?;
        Ok(Self {
            kind,
            seed: header[2],
            table,
        })
    }

    /// Rebuilds the scoring model; the graph model needs the training split.
    pub fn into_model(self, dataset: &crate::data::InteractionDataset) -> ScoringModel {
        match self.kind {
            ModelKind::Mf => ScoringModel::mf(self.table),
            ModelKind::LightGcn { n_layers } => {
                ScoringModel::light_gcn(self.table, GraphPropagation::from_train(dataset, n_layers))
            }
        }
    }
}

/// Per-row gradients, accumulated in a fixed (kind, index) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseGrad {
    dim: usize,
    rows: BTreeMap<(RowKind, usize), Vec<f64>>,
}

impl SparseGrad {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `row += scale * v`
    #[inline]
    pub fn add_scaled(&mut self, kind: RowKind, idx: usize, scale: f64, v: &[f64]) {
        let dim = self.dim;
        let row = self.rows.entry((kind, idx)).or_insert_with(|| vec![0.0; dim]);
        for (r, x) in row.iter_mut().zip(v) {
            *r += scale * x;
        }
    }

    pub fn get(&self, kind: RowKind, idx: usize) -> Option<&[f64]> {
        self.rows.get(&(kind, idx)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RowKind, usize, &[f64])> {
        self.rows.iter().map(|(&(k, i), v)| (k, i, v.as_slice()))
    }

    /// Accumulates a `(kind, index, vector)` list; duplicate rows are summed.
    pub fn from_list(dim: usize, list: &[(RowKind, usize, Vec<f64>)]) -> Self {
        let mut g = Self::new(dim);
        for (kind, idx, v) in list {
            g.add_scaled(*kind, *idx, 1.0, v);
        }
        g
    }
}

/// Accumulates duplicate rows and applies one Adam step per touched row.
pub fn apply_sparse_gradients(
    table: &mut EmbeddingTable,
    grads: &[(RowKind, usize, Vec<f64>)],
    state: &mut OptimizerState,
) {
    let acc = SparseGrad::from_list(table.dim(), grads);
    adam_step(state, table, &acc);
}
