//! False-negative distinguishability analysis.
//!
//! Collects model scores of true negatives and false negatives, estimates both
//! score densities with a Gaussian KDE and compares them with a discretized KL
//! divergence. A larger divergence means the model separates the two groups
//! better.

use std::f64::consts::PI;
use std::fmt;

use rand::seq::index;
use thiserror::Error;

use crate::data::{InteractionDataset, Split};
use crate::model::Scorer;
use crate::prefcurve::{curve_sweep, PreferenceCurve};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least two samples with nonzero variance for a density estimate")]
    DegenerateSample,
}

pub const DEFAULT_TRUE_NEGATIVES_PER_USER: usize = 200;

/// Floor applied to both densities before taking the KL divergence.
pub const KL_FLOOR: f64 = 1e-12;

/// Kernel cutoff in bandwidths; the Gaussian tail beyond it is below 1e-13.
const KERNEL_CUTOFF: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreLabel {
    TrueNegative,
    FalseNegative,
}

impl fmt::Display for ScoreLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreLabel::TrueNegative => "true_negative",
            ScoreLabel::FalseNegative => "false_negative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSample {
    pub user: usize,
    pub item: usize,
    pub label: ScoreLabel,
    pub score: f64,
}

/// Where the false negatives of a user come from.
#[derive(Debug, Clone, Copy)]
pub enum FalseNegativeSource<'a> {
    /// The user's test items (real data).
    TestItems,
    /// Known planted false negatives (synthetic data), sorted by user.
    Planted(&'a [(usize, usize)]),
}

/// Scores false negatives and (optionally subsampled) true negatives for `users`.
///
/// True negatives are items outside every known positive set of the user:
/// train, validation, test and, in planted mode, the planted items.
/// `true_negatives_per_user = None` keeps the full complement.
pub fn collect_scores<S: Scorer + ?Sized>(
    scorer: &S,
    dataset: &InteractionDataset,
    users: &[usize],
    source: FalseNegativeSource<'_>,
    true_negatives_per_user: Option<usize>,
    seed: u64,
) -> Vec<ScoreSample> {
    let test = dataset.ground_truth(Split::Test);
    let mut planted = vec![Vec::new(); dataset.n_users];
    if let FalseNegativeSource::Planted(pairs) = source {
        for &(u, i) in pairs {
            planted[u].push(i);
        }
    }
    let mut out = Vec::new();
    for &u in users {
        let false_negatives: &[usize] = match source {
            FalseNegativeSource::TestItems => &test[u],
            FalseNegativeSource::Planted(_) => &planted[u],
        };
        let mut known: Vec<usize> = dataset.all_positive_sets[u]
            .iter()
            .chain(&test[u])
            .chain(&planted[u])
            .copied()
            .collect();
        known.sort_unstable();
        known.dedup();
        let complement: Vec<usize> = (0..dataset.n_items)
            .filter(|i| known.binary_search(i).is_err())
            .collect();
        let true_negatives: Vec<usize> = match true_negatives_per_user {
            Some(n) if n < complement.len() => {
                let mut rng = seed::stream(seed, "analysis/true_negatives", &[u as u64]);
                let mut picked: Vec<usize> = index::sample(&mut rng, complement.len(), n)
                    .into_iter()
                    .map(|k| complement[k])
                    .collect();
                picked.sort_unstable();
                picked
            }
            _ => complement,
        };
        for &i in false_negatives {
            out.push(ScoreSample {
                user: u,
                item: i,
                label: ScoreLabel::FalseNegative,
                score: scorer.score(u, i),
            });
        }
        for i in true_negatives {
            out.push(ScoreSample {
                user: u,
                item: i,
                label: ScoreLabel::TrueNegative,
                score: scorer.score(u, i),
            });
        }
    }
    out
}

/// Gaussian KDE evaluated on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    sorted_samples: Vec<f64>,
}

impl DensityEstimate {
    /// Density at an arbitrary point.
    pub fn density_at(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted_samples.partition_point(|&s| s < x - KERNEL_CUTOFF * h);
        let hi = self.sorted_samples.partition_point(|&s| s <= x + KERNEL_CUTOFF * h);
        let norm = 1.0 / (self.sorted_samples.len() as f64 * h * (2.0 * PI).sqrt());
        let sum: f64 = self.sorted_samples[lo..hi]
            .iter()
            .map(|&s| {
                let t = (x - s) / h;
                (-0.5 * t * t).exp()
            })
            .sum();
        norm * sum
    }

    pub fn support(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + step * k as f64 })
        .collect()
}

/// Silverman's rule of thumb, `1.06 · σ̂ · n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

/// Gaussian KDE with Silverman bandwidth on `grid_size` points spanning
/// `[min - 3h, max + 3h]`.
pub fn kde(samples: &[f64], grid_size: usize) -> Result<DensityEstimate, AnalysisError> {
    assert!(grid_size >= 2, "grid needs at least two points");
    if samples.len() < 2 || samples.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::DegenerateSample);
    }
    let h = silverman_bandwidth(samples);
    if !(h > 0.0) {
        return Err(AnalysisError::DegenerateSample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let grid = uniform_grid(sorted[0] - 3.0 * h, sorted[sorted.len() - 1] + 3.0 * h, grid_size);
    let mut est = DensityEstimate {
        grid,
        density: Vec::new(),
        bandwidth: h,
        sorted_samples: sorted,
    };
    est.density = est.grid.iter().map(|&x| est.density_at(x)).collect();
    Ok(est)
}

/// Discretized `KL(p ‖ q)` in nats: both densities are re-evaluated on a shared
/// uniform grid over the union of their supports, floored at [`KL_FLOOR`] and
/// renormalized to unit mass on that grid.
pub fn kl_divergence(p: &DensityEstimate, q: &DensityEstimate) -> f64 {
    let (p_lo, p_hi) = p.support();
    let (q_lo, q_hi) = q.support();
    let n = p.grid.len().max(q.grid.len());
    let grid = uniform_grid(p_lo.min(q_lo), p_hi.max(q_hi), n);
    let dx = grid[1] - grid[0];
    let discretize = |est: &DensityEstimate| -> Vec<f64> {
        let raw: Vec<f64> = grid.iter().map(|&x| est.density_at(x).max(KL_FLOOR)).collect();
        let mass: f64 = raw.iter().sum::<f64>() * dx;
        raw.into_iter().map(|v| v / mass).collect()
    };
    let pd = discretize(p);
    let qd = discretize(q);
    let kl: f64 = pd.iter().zip(&qd).map(|(a, b)| a * (a / b).ln()).sum::<f64>() * dx;
    kl.max(0.0)
}

/// Result of [`distinguishability`].
#[derive(Debug, Clone)]
pub struct Distinguishability {
    pub true_negative: DensityEstimate,
    pub false_negative: DensityEstimate,
    /// `KL(true negatives ‖ false negatives)`.
    pub kl: f64,
}

/// KDE of both score groups and the KL divergence between them.
pub fn distinguishability(samples: &[ScoreSample], grid_size: usize) -> Result<Distinguishability, AnalysisError> {
    let of = |label| -> Vec<f64> {
        samples.iter().filter(|s| s.label == label).map(|s| s.score).collect()
    };
    let true_negative = kde(&of(ScoreLabel::TrueNegative), grid_size)?;
    let false_negative = kde(&of(ScoreLabel::FalseNegative), grid_size)?;
    let kl = kl_divergence(&true_negative, &false_negative);
    Ok(Distinguishability {
        true_negative,
        false_negative,
        kl,
    })
}

impl Distinguishability {
    /// `x,density_tn,density_fn` rows on a shared grid.
    pub fn density_csv(&self) -> String {
        let (a_lo, a_hi) = self.true_negative.support();
        let (b_lo, b_hi) = self.false_negative.support();
        let n = self.true_negative.grid.len().max(self.false_negative.grid.len());
        let mut out = String::from("x,density_tn,density_fn\n");
        for x in uniform_grid(a_lo.min(b_lo), a_hi.max(b_hi), n) {
            out.push_str(&format!(
                "{x:.6},{:.8e},{:.8e}\n",
                self.true_negative.density_at(x),
                self.false_negative.density_at(x)
            ));
        }
        out
    }
}

/// `label,score` rows.
pub fn samples_csv(samples: &[ScoreSample]) -> String {
    let mut out = String::from("label,score\n");
    for s in samples {
        out.push_str(&format!("{},{:.8}\n", s.label, s.score));
    }
    out
}

/// `x, Δ_g(x), Δ_g(x)/c` over `steps` points of `[lo, hi]`.
pub fn delta_curve_sweep(curve: &PreferenceCurve, lo: f64, hi: f64, steps: usize) -> Vec<(f64, f64, f64)> {
    curve_sweep(curve, lo, hi, steps)
        .into_iter()
        .map(|p| (p.x, p.delta_g, p.delta_g_over_c))
        .collect()
}

/// CSV for [`delta_curve_sweep`].
pub fn delta_curve_csv(curve: &PreferenceCurve, lo: f64, hi: f64, steps: usize) -> String {
    let mut out = String::from("x,delta_g,delta_g_over_c\n");
    for (x, d, dc) in delta_curve_sweep(curve, lo, hi, steps) {
        out.push_str(&format!("{x:.6},{d:.10e},{dc:.10e}\n"));
    }
    out
}
