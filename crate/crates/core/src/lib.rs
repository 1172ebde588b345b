//! Implicit collaborative filtering with pairwise ranking losses.
//!
//! The crate trains user/item embedding models (matrix factorization or light
//! graph convolution) with BPR or Hard-BPR, using uniform (RNS) or dynamic hard
//! (DNS) negative sampling, and evaluates them with full-ranking Recall@K and
//! NDCG@K.
//!
//! Module map:
//! - [`prefcurve`]: the preference curve `g`, its gradient magnitude and peak.
//! - [`data`]: loading, k-core filtering, temporal splits, synthetic data.
//! - [`model`]: embeddings, graph propagation, checkpoints.
//! - [`sampling`]: RNS / DNS negative selection and batch building.
//! - [`training`]: losses, gradients, Adam and the epoch loop.
//! - [`eval`]: Top-K ranking metrics.
//! - [`analysis`]: KDE / KL false-negative analysis and curve sweeps.

pub mod analysis;
pub mod data;
pub mod eval;
pub mod model;
pub mod prefcurve;
pub mod sampling;
pub mod seed;
pub mod training;

pub use data::{InteractionDataset, Split};
pub use model::{Checkpoint, EmbeddingTable, ScoringModel};
pub use prefcurve::PreferenceCurve;
pub use sampling::{SamplerConfig, SamplerKind};
pub use training::{LossConfig, LossKind, TrainConfig};
