//! Grid sweeps over config keys, with resumable results.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use hardrank_core::PreferenceCurve;
use rayon::prelude::*;

use crate::config::Settings;
use crate::run::{run_experiment, RunSummary};

/// One cell: the overrides applied on top of the base settings.
pub type Cell = Vec<(String, String)>;

/// An ordered list of cells sharing the same override keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub keys: Vec<String>,
    pub cells: Vec<Cell>,
}

impl Grid {
    /// Cartesian product of `key=v1,v2,...` axes; the last axis varies fastest.
    pub fn cartesian(axes: &[String]) -> Result<Self> {
        let mut keys = Vec::new();
        let mut cells: Vec<Cell> = vec![Vec::new()];
        for axis in axes {
            let Some((key, values)) = axis.split_once('=') else {
                bail!("sweep: malformed grid axis `{axis}` (expected key=v1,v2,...)");
            };
            let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
            if values.is_empty() {
                bail!("sweep: grid axis `{key}` has no values");
            }
            let key = key.trim().to_string();
            if keys.contains(&key) {
                bail!("sweep: grid axis `{key}` given twice");
            }
            cells = cells
                .into_iter()
                .flat_map(|cell| {
                    let key = &key;
                    values.iter().map(move |v| {
                        let mut c = cell.clone();
                        c.push((key.clone(), v.to_string()));
                        c
                    })
                })
                .collect();
            keys.push(key);
        }
        Ok(Self { keys, cells })
    }

    /// Appends the axes of `other` to every cell (Cartesian product of grids).
    pub fn product(self, other: Grid) -> Result<Self> {
        if let Some(k) = other.keys.iter().find(|k| self.keys.contains(k)) {
            bail!("sweep: key `{k}` appears in both the preset and the grid");
        }
        let mut cells = Vec::new();
        for a in &self.cells {
            for b in &other.cells {
                cells.push(a.iter().chain(b).cloned().collect());
            }
        }
        let keys = self.keys.into_iter().chain(other.keys).collect();
        Ok(Self { keys, cells })
    }

    pub fn preset(name: &str) -> Result<Self> {
        let fixed = |pairs: &[(&str, String)]| -> Cell {
            pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
        };
        let hard = ("loss.kind", "hardbpr".to_string());
        let cells: Vec<Cell> = match name {
            "b-sweep" => [-3.0, 0.0, 0.9, 3.0]
                .iter()
                .map(|b| {
                    fixed(&[hard.clone(), ("loss.a", "1.0".into()), ("loss.b", fmt(*b)), ("loss.c", "1.0".into())])
                })
                .collect(),
            "c-sweep" => {
                let a = 0.1;
                let z_peak = PreferenceCurve::new(a, 0.0, 1.0)
                    .and_then(|c| c.extremum())
                    .context("sweep: c-sweep reference curve")?
                    .x_max;
                C_SWEEP_VALUES
                    .iter()
                    .map(|&c| {
                        let b = z_peak - c * C_SWEEP_PEAK;
                        fixed(&[hard.clone(), ("loss.a", fmt(a)), ("loss.b", fmt(b)), ("loss.c", fmt(c))])
                    })
                    .collect()
            }
            "a-sweep" => [0.0, 0.1, 1.0, 10.0]
                .iter()
                .map(|a| {
                    fixed(&[hard.clone(), ("loss.a", fmt(*a)), ("loss.b", "0.0".into()), ("loss.c", "1.0".into())])
                })
                .collect(),
            other => bail!("sweep: unknown preset `{other}` (expected b-sweep, c-sweep or a-sweep)"),
        };
        let keys = cells[0].iter().map(|(k, _)| k.clone()).collect();
        Ok(Self { keys, cells })
    }
}

/// Widths of the c-sweep preset.
pub const C_SWEEP_VALUES: [f64; 5] = [4.0, 2.0, 1.0, 0.4, 0.24];
/// Peak location held fixed by the c-sweep preset; `b` is solved from it.
pub const C_SWEEP_PEAK: f64 = -1.0;

fn fmt(x: f64) -> String {
    let s = format!("{x}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Outcome of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub index: usize,
    pub values: Vec<String>,
    pub outcome: Result<RunSummary, String>,
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn header(keys: &[String]) -> String {
    let mut cols = vec!["cell".to_string()];
    cols.extend(keys.iter().cloned());
    cols.extend(
        ["status", "best_epoch", "val_recall", "val_ndcg", "test_recall", "test_ndcg", "kl_divergence", "error"]
            .map(String::from),
    );
    cols.join(",")
}

fn row(r: &CellResult) -> String {
    let mut cols = vec![r.index.to_string()];
    cols.extend(r.values.iter().map(|v| csv_field(v)));
    match &r.outcome {
        Ok(s) => cols.extend([
            "ok".into(),
            s.best_epoch.to_string(),
            format!("{:.6}", s.val_recall),
            format!("{:.6}", s.val_ndcg),
            format!("{:.6}", s.test_recall),
            format!("{:.6}", s.test_ndcg),
            s.kl.map(|k| format!("{k:.6}")).unwrap_or_default(),
            String::new(),
        ]),
        Err(e) => {
            cols.push("failed".into());
            cols.extend(std::iter::repeat_n(String::new(), 6));
            cols.push(csv_field(e));
        }
    }
    cols.join(",")
}

/// Rows of a previous results file whose cell completed, keyed by cell index.
fn completed_rows(path: &Path, grid: &Grid) -> Result<BTreeMap<usize, String>> {
    let mut done = BTreeMap::new();
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(done);
    };
    let mut lines = text.lines();
    if lines.next() != Some(header(&grid.keys).as_str()) {
        bail!(
            "sweep: {} was written for a different grid; remove it or pick another output directory",
            path.display()
        );
    }
    let n_keys = grid.keys.len();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let Some(index) = cols.first().and_then(|c| c.parse::<usize>().ok()) else {
            continue;
        };
        let Some(cell) = grid.cells.get(index) else {
            continue;
        };
        let same_values = cell.iter().zip(&cols[1..]).all(|((_, v), c)| csv_field(v) == *c);
        if same_values && cols.get(1 + n_keys) == Some(&"ok") {
            done.insert(index, line.to_string());
        }
    }
    Ok(done)
}

fn write_results(path: &Path, keys: &[String], rows: &BTreeMap<usize, String>) -> Result<()> {
    let mut out = header(keys);
    out.push('\n');
    for r in rows.values() {
        out.push_str(r);
        out.push('\n');
    }
    let tmp = path.with_extension("csv.tmp");
    fs::write(&tmp, out).context("io: writing results")?;
    fs::rename(&tmp, path).context("io: writing results")
}

pub fn cell_dir_name(index: usize) -> String {
    format!("cell-{index:03}")
}

fn run_cell(base: &Settings, root: &Path, index: usize, cell: &Cell) -> Result<RunSummary, String> {
    let mut settings = base.clone();
    for (k, v) in cell {
        settings.set_str(k, v).map_err(|e| format!("config error: {e}"))?;
    }
    let dir = root.join(cell_dir_name(index));
    settings
        .set_str("run.out", &dir.to_string_lossy())
        .map_err(|e| e.to_string())?;
    let cfg = settings.resolve().map_err(|e| format!("config error: {e}"))?;
    run_experiment(&cfg).map_err(|e| format!("{e:#}"))
}

/// Runs every cell not already completed in `root/results.csv`, using the
/// current rayon pool. Cells are independent, so the results do not depend on
/// the number of workers. `results.csv` is rewritten after every cell.
pub fn run_sweep(base: &Settings, grid: &Grid, root: &Path) -> Result<Vec<CellResult>> {
    if grid.cells.is_empty() {
        bail!("sweep: empty grid");
    }
    fs::create_dir_all(root).with_context(|| format!("io: creating {}", root.display()))?;
    let results_path = root.join("results.csv");
    let done = completed_rows(&results_path, grid)?;
    let rows = Mutex::new(done.clone());
    let pending: Vec<usize> = (0..grid.cells.len()).filter(|i| !done.contains_key(i)).collect();
    write_results(&results_path, &grid.keys, &done)?;

    let results: Vec<CellResult> = pending
        .par_iter()
        .map(|&index| {
            let cell = &grid.cells[index];
            let result = CellResult {
                index,
                values: cell.iter().map(|(_, v)| v.clone()).collect(),
                outcome: run_cell(base, root, index, cell),
            };
            let mut rows = rows.lock().expect("results lock poisoned");
            rows.insert(index, row(&result));
            write_results(&results_path, &grid.keys, &rows).map(|_| result)
        })
        .collect::<Result<_>>()?;
    Ok(results)
}
