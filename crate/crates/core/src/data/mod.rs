//! Interaction data: loading, k-core filtering, temporal splitting and the
//! indexed dataset used by every other module.

mod synthetic;

pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec, HELDOUT_FRACTION};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no interactions left after {0}")]
    EmptyAfterFilter(&'static str),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

impl DataError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DataError::Parse { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Field separator of an interaction file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Tsv,
    Csv,
}

impl Format {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Format::Tsv => line.split('\t').map(str::trim).collect(),
            Format::Csv => line.split(',').map(str::trim).collect(),
        }
    }

    /// Picks the format from a file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            _ => Format::Tsv,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(Format::Tsv),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected tsv or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawInteraction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
}

fn read_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    BufReader::new(file)
        .lines()
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)
}

/// Reads `user<sep>item<sep>timestamp` rows. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn load_interactions(path: &Path, format: Format) -> Result<Vec<RawInteraction>, DataError> {
    let mut rows = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| DataError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let fields = format.split(line);
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        }
        let timestamp = fields[2]
            .parse::<i64>()
            .map_err(|_| parse_err(format!("timestamp `{}` is not an integer", fields[2])))?;
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err("empty user or item id".into()));
        }
        rows.push(RawInteraction {
            user_id: fields[0].to_string(),
            item_id: fields[1].to_string(),
            timestamp,
        });
    }
    Ok(rows)
}

/// Reads `user<sep>item` rows (pre-split mode).
pub fn load_pairs(path: &Path, format: Format) -> Result<Vec<(String, String)>, DataError> {
    let mut rows = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = format.split(line);
        if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: "expected `user<sep>item`".into(),
            });
        }
        rows.push((fields[0].to_string(), fields[1].to_string()));
    }
    Ok(rows)
}

/// Iteratively drops users with fewer than `k` interactions until nothing
/// changes. Items are never filtered. Row order is preserved.
pub fn k_core_filter(rows: Vec<RawInteraction>, k: usize) -> Result<Vec<RawInteraction>, DataError> {
    assert!(k >= 1, "k must be at least 1");
    let mut rows = rows;
    loop {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for r in &rows {
            *counts.entry(r.user_id.as_str()).or_default() += 1;
        }
        let keep: HashSet<String> = counts
            .into_iter()
            .filter(|&(_, n)| n >= k)
            .map(|(u, _)| u.to_string())
            .collect();
        let before = rows.len();
        rows.retain(|r| keep.contains(&r.user_id));
        // one pass is already the fixpoint while only users are filtered
        if rows.len() == before {
            break;
        }
    }
    if rows.is_empty() {
        return Err(DataError::EmptyAfterFilter("k-core filtering"));
    }
    Ok(rows)
}

/// Train/val/test proportions for [`temporal_split`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Which held-out split to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Indexed implicit feedback with train/val/test splits.
///
/// Users and items are dense 0-based indices; `user_ids` / `item_ids` map them
/// back to the original tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub n_users: usize,
    pub n_items: usize,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    /// Sorted train items per user.
    pub train_positive_sets: Vec<Vec<usize>>,
    /// Sorted train ∪ val items per user.
    pub all_positive_sets: Vec<Vec<usize>>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

impl InteractionDataset {
    /// Builds the lookup structures from already-indexed, disjoint splits.
    pub fn from_indexed(
        n_users: usize,
        n_items: usize,
        train: Vec<(usize, usize)>,
        val: Vec<(usize, usize)>,
        test: Vec<(usize, usize)>,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Self {
        let mut train_sets = vec![Vec::new(); n_users];
        for &(u, i) in &train {
            train_sets[u].push(i);
        }
        let mut all_sets = train_sets.clone();
        for &(u, i) in &val {
            all_sets[u].push(i);
        }
        for set in train_sets.iter_mut().chain(all_sets.iter_mut()) {
            set.sort_unstable();
            set.dedup();
        }
        Self {
            n_users,
            n_items,
            train,
            val,
            test,
            train_positive_sets: train_sets,
            all_positive_sets: all_sets,
            user_ids,
            item_ids,
        }
    }

    #[inline]
    pub fn is_train_positive(&self, u: usize, i: usize) -> bool {
        self.train_positive_sets[u].binary_search(&i).is_ok()
    }

    pub fn split(&self, split: Split) -> &[(usize, usize)] {
        match split {
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Per-user sorted item lists of a held-out split.
    pub fn ground_truth(&self, split: Split) -> Vec<Vec<usize>> {
        let mut gt = vec![Vec::new(); self.n_users];
        for &(u, i) in self.split(split) {
            gt[u].push(i);
        }
        for items in &mut gt {
            items.sort_unstable();
        }
        gt
    }

    pub fn total_interactions(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            users: self.n_users,
            items: self.n_items,
            train: self.train.len(),
            val: self.val.len(),
            test: self.test.len(),
            density: self.total_interactions() as f64 / (self.n_users as f64 * self.n_items as f64),
        }
    }
}

/// Table-style dataset statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSummary {
    pub users: usize,
    pub items: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub density: f64,
}

impl DatasetSummary {
    pub const CSV_HEADER: &'static str = "#User,#Item,#Train,#Val,#Test,Density";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.5}",
            self.users, self.items, self.train, self.val, self.test, self.density
        )
    }
}

/// Assigns dense indices to users and items in first-occurrence order of the
/// training rows, then indexes val/test, dropping cold-start rows, duplicate pairs
/// and pairs already present in an earlier split.
fn index_splits(
    train: &[(&str, &str)],
    val: &[(&str, &str)],
    test: &[(&str, &str)],
) -> InteractionDataset {
    let mut users: HashMap<&str, usize> = HashMap::new();
    let mut items: HashMap<&str, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();

    let mut train_idx = Vec::with_capacity(train.len());
    for &(u, i) in train {
        let ui = *users.entry(u).or_insert_with(|| {
            user_ids.push(u.to_string());
            user_ids.len() - 1
        });
        let ii = *items.entry(i).or_insert_with(|| {
            item_ids.push(i.to_string());
            item_ids.len() - 1
        });
        if seen.insert((ui, ii)) {
            train_idx.push((ui, ii));
        }
    }
    let mut index_heldout = |rows: &[(&str, &str)]| -> Vec<(usize, usize)> {
        rows.iter()
            .filter_map(|&(u, i)| Some((*users.get(u)?, *items.get(i)?)))
            .filter(|pair| seen.insert(*pair))
            .collect()
    };
    let val_idx = index_heldout(val);
    let test_idx = index_heldout(test);
    InteractionDataset::from_indexed(
        user_ids.len(),
        item_ids.len(),
        train_idx,
        val_idx,
        test_idx,
        user_ids,
        item_ids,
    )
}

/// Global chronological split: the latest `fractions.test` of rows go to test,
/// the preceding `fractions.val` to validation and the rest to train. Ties in
/// timestamp keep input order.
pub fn temporal_split(
    rows: &[RawInteraction],
    fractions: SplitFractions,
) -> Result<InteractionDataset, DataError> {
    if rows.is_empty() {
        return Err(DataError::EmptyAfterFilter("temporal split (no input rows)"));
    }
    let mut order: Vec<&RawInteraction> = rows.iter().collect();
    order.sort_by_key(|r| r.timestamp);

    let n = order.len();
    let n_test = (n as f64 * fractions.test).round() as usize;
    let n_val = (n as f64 * fractions.val).round() as usize;
    let n_train = n.saturating_sub(n_test + n_val);
    let pairs: Vec<(&str, &str)> = order
        .iter()
        .map(|r| (r.user_id.as_str(), r.item_id.as_str()))
        .collect();
    let ds = index_splits(
        &pairs[..n_train],
        &pairs[n_train..n_train + n_val],
        &pairs[n_train + n_val..],
    );
    check_nonempty(ds)
}

/// Builds a dataset from three pre-split `user<sep>item` files.
pub fn load_presplit(
    train: &Path,
    val: &Path,
    test: &Path,
    format: Format,
) -> Result<InteractionDataset, DataError> {
    let train = load_pairs(train, format)?;
    let val = load_pairs(val, format)?;
    let test = load_pairs(test, format)?;
    check_nonempty(index_splits(&as_refs(&train), &as_refs(&val), &as_refs(&test)))
}

fn as_refs(rows: &[(String, String)]) -> Vec<(&str, &str)> {
    rows.iter().map(|(u, i)| (u.as_str(), i.as_str())).collect()
}

fn check_nonempty(ds: InteractionDataset) -> Result<InteractionDataset, DataError> {
    if ds.train.is_empty() {
        return Err(DataError::EmptyAfterFilter("splitting (train split is empty)"));
    }
    if ds.val.is_empty() {
        return Err(DataError::EmptyAfterFilter("splitting (val split is empty)"));
    }
    if ds.test.is_empty() {
        return Err(DataError::EmptyAfterFilter("splitting (test split is empty)"));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn raw(u: &str, i: &str, t: i64) -> RawInteraction {
        RawInteraction {
            user_id: u.into(),
            item_id: i.into(),
            timestamp: t,
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_well_formed_tsv() {
        let f = write_tmp("u1\ti1\t10\nu2\ti2\t5\nu1\ti3\t7\n");
        let rows = load_interactions(f.path(), Format::Tsv).unwrap();
        assert_eq!(rows, vec![raw("u1", "i1", 10), raw("u2", "i2", 5), raw("u1", "i3", 7)]);
    }

    #[test]
    fn load_empty_and_csv() {
        let f = write_tmp("");
        assert!(load_interactions(f.path(), Format::Tsv).unwrap().is_empty());
        let f = write_tmp("a,b,1\n");
        assert_eq!(load_interactions(f.path(), Format::Csv).unwrap(), vec![raw("a", "b", 1)]);
    }

    #[test]
    fn load_reports_line_of_bad_timestamp() {
        let f = write_tmp("u1\ti1\t10\nu2\ti2\tyesterday\n");
        let err = load_interactions(f.path(), Format::Tsv).unwrap_err();
        assert_eq!(err.line(), Some(2));
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let err = load_interactions(Path::new("/definitely/not/here.tsv"), Format::Tsv).unwrap_err();
        assert!(matches!(err, DataError::Io { .. }));
    }

    #[test]
    fn k_core_cases() {
        let nine: Vec<_> = (0..9).map(|t| raw("u", &format!("i{t}"), t)).collect();
        assert!(matches!(k_core_filter(nine, 10), Err(DataError::EmptyAfterFilter(_))));

        let ten: Vec<_> = (0..10).map(|t| raw("u", &format!("i{t}"), t)).collect();
        assert_eq!(k_core_filter(ten.clone(), 10).unwrap(), ten);

        let mut mixed: Vec<_> = (0..12).map(|t| raw("big", &format!("i{t}"), t)).collect();
        mixed.extend((0..3).map(|t| raw("small", &format!("i{t}"), t)));
        let out = k_core_filter(mixed, 10).unwrap();
        assert_eq!(out.len(), 12);
        assert!(out.iter().all(|r| r.user_id == "big"));
    }

    fn ten_rows(ts: impl Fn(i64) -> i64) -> Vec<RawInteraction> {
        let pairs = [
            ("a", "x"), ("b", "y"), ("a", "y"), ("b", "x"), ("a", "z"),
            ("b", "w"), ("a", "v"), ("b", "v"), ("a", "w"), ("b", "z"),
        ];
        pairs.iter().enumerate().map(|(t, (u, i))| raw(u, i, ts(t as i64))).collect()
    }

    #[test]
    fn split_ten_distinct_timestamps() {
        let ds = temporal_split(&ten_rows(|t| 100 + t), SplitFractions::default()).unwrap();
        assert_eq!(ds.train.len(), 8);
        assert_eq!(ds.user_ids, vec!["a", "b"]);
        assert_eq!(ds.item_ids, vec!["x", "y", "z", "w", "v"]);
        assert_eq!(ds.val, vec![(0, 3)]); // (a, w)
        assert_eq!(ds.test, vec![(1, 2)]); // (b, z)
    }

    #[test]
    fn split_equal_timestamps_follow_input_order() {
        let ascending = temporal_split(&ten_rows(|t| t), SplitFractions::default()).unwrap();
        let tied = temporal_split(&ten_rows(|_| 0), SplitFractions::default()).unwrap();
        assert_eq!(ascending, tied);
        // reversed timestamps reverse the timeline
        let reversed = temporal_split(&ten_rows(|t| -t), SplitFractions::default()).unwrap();
        assert_eq!(reversed.user_ids[0], "b");
    }

    #[test]
    fn split_assigns_latest_rows_to_test() {
        let mut rows = Vec::new();
        for t in 0..8 {
            rows.push(raw("u", &format!("i{t}"), t));
        }
        // held-out rows reuse train ids but are new pairs
        rows.push(raw("w", "i0", 8));
        rows.push(raw("w2", "i1", 9));
        rows.push(raw("w", "i5", 20));
        rows.push(raw("w2", "i6", 30));
        // 12 rows: test = round(1.2) = 1, val = 1, train = 10
        let ds = temporal_split(&rows, SplitFractions::default()).unwrap();
        assert_eq!(ds.train.len(), 10);
        assert_eq!(ds.val, vec![(1, 5)]); // user w (idx 1), item i5
        assert_eq!(ds.test, vec![(2, 6)]);
    }

    #[test]
    fn split_drops_cold_start_and_requires_nonempty() {
        let rows = vec![raw("a", "x", 1), raw("b", "y", 2), raw("a", "y", 3), raw("c", "z", 4)];
        // n=4: test=round(0.4)=0 -> test empty
        assert!(temporal_split(&rows, SplitFractions::default()).is_err());
    }

    #[test]
    fn membership_matches_brute_force() {
        let rows: Vec<_> = (0..200)
            .map(|t| raw(&format!("u{}", t % 7), &format!("i{}", (t * 13) % 29), t))
            .collect();
        let ds = temporal_split(&rows, SplitFractions::default()).unwrap();
        for u in 0..ds.n_users {
            for i in 0..ds.n_items {
                let brute = ds.train.iter().any(|&p| p == (u, i));
                assert_eq!(ds.is_train_positive(u, i), brute);
            }
        }
        // pairwise disjoint splits
        let train: HashSet<_> = ds.train.iter().collect();
        let val: HashSet<_> = ds.val.iter().collect();
        assert!(ds.val.iter().all(|p| !train.contains(p)));
        assert!(ds.test.iter().all(|p| !train.contains(p) && !val.contains(p)));
    }

    #[test]
    fn summary_row() {
        let ds = InteractionDataset::from_indexed(
            2,
            5,
            vec![(0, 0), (1, 1)],
            vec![(0, 2)],
            vec![(1, 3)],
            vec!["a".into(), "b".into()],
            (0..5).map(|i| i.to_string()).collect(),
        );
        assert_eq!(ds.summary().csv_row(), "2,5,2,1,1,0.40000");
        assert_eq!(ds.all_positive_sets[0], vec![0, 2]);
        assert_eq!(ds.ground_truth(Split::Test)[1], vec![3]);
    }
}
