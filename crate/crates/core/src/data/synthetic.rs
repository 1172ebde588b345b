//! Planted-preference datasets with known false negatives.
//!
//! Users and items get Gaussian latent vectors. Each user's positives are the
//! `interactions_per_user` items with the highest latent score plus Gaussian
//! noise. A fixed fraction of those positives is withheld from every split and
//! returned as planted false negatives: items the user truly prefers but which
//! look like ordinary negatives to a sampler.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, InteractionDataset};
use crate::seed;

/// Share of each user's positives held out for validation and for test.
pub const HELDOUT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub latent_dim: usize,
    pub interactions_per_user: usize,
    pub false_negative_fraction: f64,
    pub noise_level: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Per-user counts `(false negatives, val, test, train)`.
    pub fn per_user_counts(&self) -> (usize, usize, usize, usize) {
        let m = self.interactions_per_user as f64;
        let n_fn = (m * self.false_negative_fraction).round() as usize;
        let n_heldout = ((m * HELDOUT_FRACTION).round() as usize).max(1);
        let n_train = self
            .interactions_per_user
            .saturating_sub(n_fn + 2 * n_heldout);
        (n_fn, n_heldout, n_heldout, n_train)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Spec(m));
        if self.n_users == 0 || self.n_items == 0 || self.latent_dim == 0 {
            return err("n_users, n_items and latent_dim must be positive".into());
        }
        if self.interactions_per_user == 0 || self.interactions_per_user >= self.n_items {
            return err(format!(
                "interactions_per_user must be in 1..{} (n_items)",
                self.n_items
            ));
        }
        if !(0.0..1.0).contains(&self.false_negative_fraction) {
            return err("false_negative_fraction must be in [0, 1)".into());
        }
        if self.false_negative_fraction + 2.0 * HELDOUT_FRACTION >= 1.0 {
            return err(format!(
                "false_negative_fraction {} plus held-out fraction {} leaves no training data",
                self.false_negative_fraction,
                2.0 * HELDOUT_FRACTION
            ));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return err("noise_level must be finite and >= 0".into());
        }
        if self.per_user_counts().3 == 0 {
            return err("too few interactions per user to leave a training item".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: InteractionDataset,
    pub planted_false_negatives: Vec<(usize, usize)>,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    spec: SyntheticSpec,
}

impl SyntheticData {
    /// Recomputes the noisy generator scores of every item for user `u`.
    pub fn generator_scores(&self, u: usize) -> Vec<f64> {
        noisy_scores(&self.spec, &self.user_factors, &self.item_factors, u)
    }

    /// Noise-free latent affinity of `(u, i)`.
    pub fn latent_score(&self, u: usize, i: usize) -> f64 {
        let d = self.spec.latent_dim;
        dot(&self.user_factors[u * d..(u + 1) * d], &self.item_factors[i * d..(i + 1) * d])
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn gaussian_matrix(rows: usize, dim: usize, scale: f64, rng: &mut seed::StreamRng) -> Vec<f64> {
    (0..rows * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn noisy_scores(spec: &SyntheticSpec, users: &[f64], items: &[f64], u: usize) -> Vec<f64> {
    let d = spec.latent_dim;
    let pu = &users[u * d..(u + 1) * d];
    let mut rng = seed::stream(spec.seed, "synthetic/noise", &[u as u64]);
    (0..spec.n_items)
        .map(|i| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            dot(pu, &items[i * d..(i + 1) * d]) + spec.noise_level * eps
        })
        .collect()
}

/// Generates a dataset and its planted false negatives. Deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, DataError> {
    spec.validate()?;
    let d = spec.latent_dim;
    // entry variance 1/sqrt(d) gives unit-variance dot products
    let scale = (d as f64).powf(-0.25);
    let mut rng = seed::stream(spec.seed, "synthetic/latent", &[]);
    let user_factors = gaussian_matrix(spec.n_users, d, scale, &mut rng);
    let item_factors = gaussian_matrix(spec.n_items, d, scale, &mut rng);

    let (n_fn, n_val, n_test, _) = spec.per_user_counts();
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    let mut planted = Vec::new();
    for u in 0..spec.n_users {
        let scores = noisy_scores(spec, &user_factors, &item_factors, u);
        let mut order: Vec<usize> = (0..spec.n_items).collect();
        order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
        let mut positives = order[..spec.interactions_per_user].to_vec();
        positives.shuffle(&mut seed::stream(spec.seed, "synthetic/assign", &[u as u64]));

        let (fns, rest) = positives.split_at(n_fn);
        let (test_items, rest) = rest.split_at(n_test);
        let (val_items, train_items) = rest.split_at(n_val);
        let mut fns = fns.to_vec();
        fns.sort_unstable();
        planted.extend(fns.iter().map(|&i| (u, i)));
        test.extend(test_items.iter().map(|&i| (u, i)));
        val.extend(val_items.iter().map(|&i| (u, i)));
        train.extend(train_items.iter().map(|&i| (u, i)));
    }

    let dataset = InteractionDataset::from_indexed(
        spec.n_users,
        spec.n_items,
        train,
        val,
        test,
        (0..spec.n_users).map(|u| format!("u{u}")).collect(),
        (0..spec.n_items).map(|i| format!("i{i}")).collect(),
    );
    Ok(SyntheticData {
        dataset,
        planted_false_negatives: planted,
        user_factors,
        item_factors,
        spec: spec.clone(),
    })
}
