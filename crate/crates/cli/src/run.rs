//! End-to-end runs: load data, train, write artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hardrank_core::analysis::{self, distinguishability, FalseNegativeSource};
use hardrank_core::data::{
    generate_synthetic, k_core_filter, load_interactions, load_presplit, temporal_split, Format,
    SplitFractions,
};
use hardrank_core::model::GraphPropagation;
use hardrank_core::training::{train, EpochStats, MetricRecord, TrainOutcome};
use hardrank_core::{Checkpoint, EmbeddingTable, InteractionDataset, LossKind, ScoringModel};

use crate::config::{AnalysisSpec, DataSource, ExperimentConfig, ModelChoice};

/// A dataset plus, for synthetic data, the planted false negatives.
pub struct LoadedData {
    pub dataset: InteractionDataset,
    pub planted: Option<Vec<(usize, usize)>>,
}

const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

fn find_split_file(dir: &Path, name: &str) -> Result<PathBuf> {
    for ext in ["txt", "tsv", "csv"] {
        let p = dir.join(format!("{name}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    bail!("data: {} has no {name}.txt, {name}.tsv or {name}.csv", dir.display())
}

pub fn load_data(source: &DataSource) -> Result<LoadedData> {
    match source {
        DataSource::Synthetic(spec) => {
            let data = generate_synthetic(spec).context("data: synthetic generation failed")?;
            Ok(LoadedData {
                dataset: data.dataset,
                planted: Some(data.planted_false_negatives),
            })
        }
        DataSource::Files {
            path,
            format,
            k_core,
            val_fraction,
            test_fraction,
        } => {
            let dataset = if path.is_dir() {
                let files = SPLIT_NAMES
                    .iter()
                    .map(|n| find_split_file(path, n))
                    .collect::<Result<Vec<_>>>()?;
                let fmt = format.unwrap_or_else(|| Format::from_path(&files[0]));
                load_presplit(&files[0], &files[1], &files[2], fmt).context("data")?
            } else {
                let fmt = format.unwrap_or_else(|| Format::from_path(path));
                let mut rows = load_interactions(path, fmt).context("data")?;
                if *k_core > 0 {
                    rows = k_core_filter(rows, *k_core).context("data")?;
                }
                let fractions = SplitFractions {
                    train: 1.0 - val_fraction - test_fraction,
                    val: *val_fraction,
                    test: *test_fraction,
                };
                temporal_split(&rows, fractions).context("data")?
            };
            Ok(LoadedData {
                dataset,
                planted: None,
            })
        }
    }
}

pub fn build_model(cfg: &ExperimentConfig, dataset: &InteractionDataset) -> ScoringModel {
    let table = EmbeddingTable::init(dataset.n_users, dataset.n_items, cfg.dim, cfg.seed);
    match cfg.model {
        ModelChoice::Mf => ScoringModel::mf(table),
        ModelChoice::LightGcn => {
            ScoringModel::light_gcn(table, GraphPropagation::from_train(dataset, cfg.layers))
        }
    }
}

/// Headline numbers of a finished run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub k: usize,
    pub best_epoch: usize,
    pub val_recall: f64,
    pub val_ndcg: f64,
    pub test_recall: f64,
    pub test_ndcg: f64,
    pub kl: Option<f64>,
}

impl RunSummary {
    pub fn line(&self) -> String {
        format!(
            "test_recall@{k}={:.6} test_ndcg@{k}={:.6}",
            self.test_recall,
            self.test_ndcg,
            k = self.k
        )
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>, written: &mut Vec<String>) -> Result<()> {
    fs::write(dir.join(name), contents).with_context(|| format!("io: writing {name}"))?;
    written.push(name.to_string());
    Ok(())
}

fn metrics_csv(outcome: &TrainOutcome, k: usize) -> String {
    let mut out = MetricRecord::csv_header(k);
    out.push('\n');
    for r in &outcome.records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn epochs_csv(epochs: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_loss,scorings,max_magnitude\n");
    for e in epochs {
        out.push_str(&format!(
            "{},{:.6},{},{:.6e}\n",
            e.epoch, e.mean_loss, e.scorings, e.max_magnitude
        ));
    }
    out
}

fn id_map(ids: &[String]) -> String {
    ids.iter().enumerate().map(|(i, id)| format!("{i}\t{id}\n")).collect()
}

/// Files written by a run with the given analysis setting, besides the manifest.
pub fn declared_files(cfg: &ExperimentConfig) -> Vec<&'static str> {
    let mut files = vec![
        "config.toml",
        "metrics.csv",
        "epochs.csv",
        "checkpoint.bin",
        "user_ids.txt",
        "item_ids.txt",
        "summary.txt",
    ];
    if cfg.loss.kind == LossKind::HardBpr {
        files.push("curve.csv");
    }
    if cfg.analysis.enabled {
        files.extend(["scores.csv", "kde.csv", "kl.txt"]);
    }
    files
}

/// Runs the false-negative analysis and writes `scores.csv`, `kde.csv`, `kl.txt`.
pub fn write_analysis(
    dir: &Path,
    model: &ScoringModel,
    data: &LoadedData,
    spec: &AnalysisSpec,
    seed: u64,
    written: &mut Vec<String>,
) -> Result<f64> {
    let ds = &data.dataset;
    let view = model.scoring_view();
    let source = match &data.planted {
        Some(p) => FalseNegativeSource::Planted(p),
        None => FalseNegativeSource::TestItems,
    };
    let users: Vec<usize> = (0..ds.n_users).collect();
    let samples = analysis::collect_scores(
        view.as_ref(),
        ds,
        &users,
        source,
        spec.true_negatives_per_user,
        seed,
    );
    let d = distinguishability(&samples, spec.grid_size).context("analysis")?;
    write(dir, "scores.csv", analysis::samples_csv(&samples), written)?;
    write(dir, "kde.csv", d.density_csv(), written)?;
    write(dir, "kl.txt", format!("kl_divergence={:.6}\n", d.kl), written)?;
    Ok(d.kl)
}

/// Trains per `cfg` and writes every artifact into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let data = load_data(&cfg.data)?;
    run_on(cfg, &data)
}

/// Like [`run_experiment`] with already-loaded data.
pub fn run_on(cfg: &ExperimentConfig, data: &LoadedData) -> Result<RunSummary> {
    let ds = &data.dataset;
    let dir = &cfg.out;
    fs::create_dir_all(dir).with_context(|| format!("io: creating {}", dir.display()))?;
    let mut written = Vec::new();
    write(dir, "config.toml", cfg.settings.to_toml(), &mut written)?;

    let model = build_model(cfg, ds);
    let outcome = train(ds, model, &cfg.sampler, &cfg.loss, &cfg.train).context("training")?;

    write(dir, "metrics.csv", metrics_csv(&outcome, cfg.train.k), &mut written)?;
    write(dir, "epochs.csv", epochs_csv(&outcome.epochs), &mut written)?;
    let checkpoint = Checkpoint::new(&outcome.best_model, cfg.seed);
    write(dir, "checkpoint.bin", checkpoint.to_bytes(), &mut written)?;
    write(dir, "user_ids.txt", id_map(&ds.user_ids), &mut written)?;
    write(dir, "item_ids.txt", id_map(&ds.item_ids), &mut written)?;
    if cfg.loss.kind == LossKind::HardBpr {
        let csv = analysis::delta_curve_csv(&cfg.loss.curve, -10.0, 10.0, 2001);
        write(dir, "curve.csv", csv, &mut written)?;
    }

    let (val, test) = match (outcome.best_val, outcome.test_at_best()) {
        (Some(v), Some(t)) => (v, t),
        _ => bail!("training: no evaluation was recorded (train.epochs or train.eval_every too small)"),
    };
    let kl = if cfg.analysis.enabled {
        Some(write_analysis(dir, &outcome.best_model, data, &cfg.analysis, cfg.seed, &mut written)?)
    } else {
        None
    };
    let summary = RunSummary {
        k: cfg.train.k,
        best_epoch: outcome.best_epoch,
        val_recall: val.recall,
        val_ndcg: val.ndcg,
        test_recall: test.recall,
        test_ndcg: test.ndcg,
        kl,
    };
    write(dir, "summary.txt", format!("{}\n", summary.line()), &mut written)?;
    write_manifest(dir, &written)?;
    Ok(summary)
}

/// `manifest.txt`: one `name<TAB>bytes` line per artifact.
fn write_manifest(dir: &Path, files: &[String]) -> Result<()> {
    let mut out = String::new();
    for f in files {
        let len = fs::metadata(dir.join(f))
            .with_context(|| format!("io: reading {f}"))?
            .len();
        out.push_str(&format!("{f}\t{len}\n"));
    }
    fs::write(dir.join("manifest.txt"), out).context("io: writing manifest.txt")
}

/// Checks that every manifest entry exists with the recorded size and that
/// every declared file is listed. Returns the missing or mismatched names.
pub fn verify_manifest(dir: &Path, declared: &[&str]) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join("manifest.txt")).context("io: reading manifest.txt")?;
    let mut problems = Vec::new();
    let mut listed = Vec::new();
    for line in text.lines() {
        let Some((name, len)) = line.split_once('\t') else {
            problems.push(line.to_string());
            continue;
        };
        listed.push(name);
        let ok = fs::metadata(dir.join(name))
            .map(|m| m.len().to_string() == len)
            .unwrap_or(false);
        if !ok {
            problems.push(name.to_string());
        }
    }
    problems.extend(
        declared
            .iter()
            .filter(|d| !listed.contains(d))
            .map(|d| d.to_string()),
    );
    Ok(problems)
}

/// Loads `checkpoint.bin` from a run directory against freshly loaded data.
pub fn load_checkpoint(path: &Path, dataset: &InteractionDataset) -> Result<ScoringModel> {
    let bytes = fs::read(path).with_context(|| format!("io: reading {}", path.display()))?;
    let ckpt = Checkpoint::read_from(bytes.as_slice()).context("model: bad checkpoint")?;
    if ckpt.table.n_users() != dataset.n_users || ckpt.table.n_items() != dataset.n_items {
        bail!(
            "model: checkpoint is {}x{} but the dataset is {}x{}",
            ckpt.table.n_users(),
            ckpt.table.n_items(),
            dataset.n_users,
            dataset.n_items
        );
    }
    Ok(ckpt.into_model(dataset))
}
