//! Experiment configuration: flat `section.key = value` settings.
//!
//! Files are TOML (either `[section]` tables or dotted keys); every key can be
//! overridden from the command line. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hardrank_core::data::{Format, SyntheticSpec};
use hardrank_core::training::{LossConfig, TrainConfig};
use hardrank_core::{PreferenceCurve, SamplerConfig};
use thiserror::Error;
use toml::Value;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("`{key}`: expected {expected}, found `{found}`")]
    Type {
        key: String,
        expected: &'static str,
        found: String,
    },
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("malformed config file: {0}")]
    Parse(String),
    #[error("malformed override `{0}` (expected section.key=value)")]
    Override(String),
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

fn defaults() -> Vec<(&'static str, Value)> {
    use Value::{Boolean as B, Float as F, Integer as I, String as S};
    let s = |v: &str| S(v.to_string());
    vec![
        ("data.path", s("")),
        ("data.format", s("auto")),
        ("data.synthetic", B(false)),
        ("data.k_core", I(0)),
        ("data.val_fraction", F(0.1)),
        ("data.test_fraction", F(0.1)),
        ("synthetic.n_users", I(2000)),
        ("synthetic.n_items", I(4000)),
        ("synthetic.latent_dim", I(8)),
        ("synthetic.interactions_per_user", I(20)),
        ("synthetic.false_negative_fraction", F(0.2)),
        ("synthetic.noise_level", F(0.5)),
        ("model.kind", s("mf")),
        ("model.dim", I(32)),
        ("model.layers", I(2)),
        ("sampler.kind", s("dns")),
        ("sampler.pool_size", I(32)),
        ("loss.kind", s("bpr")),
        ("loss.a", F(1.0)),
        ("loss.b", F(0.0)),
        ("loss.c", F(1.0)),
        ("loss.l2", F(0.0)),
        ("train.epochs", I(60)),
        ("train.batch_size", I(2048)),
        ("train.lr", F(0.01)),
        ("train.eval_every", I(1)),
        ("train.patience", I(10)),
        ("train.k", I(50)),
        ("train.test_excludes_val", B(true)),
        ("analysis.enabled", B(true)),
        ("analysis.true_negatives_per_user", I(200)),
        ("analysis.grid_size", I(512)),
        ("run.seed", I(0)),
        ("run.out", s("runs/default")),
    ]
}

/// Resolved key/value settings, always containing every known key.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, Value>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            values: defaults()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

impl Settings {
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Merges a TOML document over the current values.
    pub fn merge_toml(&mut self, text: &str) -> Result<(), ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        for (key, value) in flat {
            self.set_value(&key, value)?;
        }
        Ok(())
    }

    pub fn set_value(&mut self, key: &str, value: Value) -> Result<(), ConfigError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(ConfigError::UnknownKey(key.to_string())),
        }
    }

    /// Sets a key from command-line text. String-valued keys take the text
    /// verbatim; other keys parse it as a TOML value.
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let current = self
            .values
            .get(key)
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let value = match current {
            Value::String(_) => Value::String(raw.to_string()),
            _ => format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| Value::String(raw.to_string())),
        };
        self.set_value(key, value)
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
        self.set_str(key.trim(), raw.trim())
    }

    pub fn get(&self, key: &str) -> Result<&Value, ConfigError> {
        self.values
            .get(key)
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))
    }

    fn type_error(&self, key: &str, expected: &'static str) -> ConfigError {
        ConfigError::Type {
            key: key.to_string(),
            expected,
            found: self.values.get(key).map(|v| v.to_string()).unwrap_or_default(),
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        match self.get(key)? {
            Value::Float(x) if x.is_finite() => Ok(*x),
            Value::Integer(n) => Ok(*n as f64),
            _ => Err(self.type_error(key, "a finite number")),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        match self.get(key)? {
            Value::Integer(n) if *n >= 0 => Ok(*n as u64),
            _ => Err(self.type_error(key, "a nonnegative integer")),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        Ok(self.u64(key)? as usize)
    }

    pub fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        match self.get(key)? {
            Value::Boolean(b) => Ok(*b),
            _ => Err(self.type_error(key, "true or false")),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str, ConfigError> {
        match self.get(key)? {
            Value::String(s) => Ok(s),
            _ => Err(self.type_error(key, "a string")),
        }
    }

    fn choice<'a>(&self, key: &str, options: &[&'a str]) -> Result<&'a str, ConfigError> {
        let v = self.str(key)?;
        options.iter().find(|o| **o == v).copied().ok_or_else(|| {
            ConfigError::invalid(key, format!("expected one of {}, found `{v}`", options.join(", ")))
        })
    }

    /// Flat `section.key = value` TOML, one key per line, sorted.
    pub fn to_toml(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_settings(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// A single interaction file (temporal split) or a directory holding
    /// `train`, `val` and `test` files (pre-split).
    Files {
        path: PathBuf,
        format: Option<Format>,
        k_core: usize,
        val_fraction: f64,
        test_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Mf,
    LightGcn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSpec {
    pub enabled: bool,
    /// `None` scores every true negative.
    pub true_negatives_per_user: Option<usize>,
    pub grid_size: usize,
}

/// Fully validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub model: ModelChoice,
    pub dim: usize,
    pub layers: usize,
    pub sampler: SamplerConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisSpec,
    pub seed: u64,
    pub out: PathBuf,
    pub settings: Settings,
}

impl ExperimentConfig {
    fn from_settings(s: &Settings) -> Result<Self, ConfigError> {
        let seed = s.u64("run.seed")?;
        let data = if s.bool("data.synthetic")? {
            let spec = SyntheticSpec {
                n_users: s.usize("synthetic.n_users")?,
                n_items: s.usize("synthetic.n_items")?,
                latent_dim: s.usize("synthetic.latent_dim")?,
                interactions_per_user: s.usize("synthetic.interactions_per_user")?,
                false_negative_fraction: s.f64("synthetic.false_negative_fraction")?,
                noise_level: s.f64("synthetic.noise_level")?,
                seed,
            };
            spec.validate()
                .map_err(|e| ConfigError::invalid("synthetic", e.to_string()))?;
            DataSource::Synthetic(spec)
        } else {
            let path = s.str("data.path")?;
            if path.is_empty() {
                return Err(ConfigError::invalid(
                    "data.path",
                    "required unless data.synthetic = true",
                ));
            }
            let format = match s.choice("data.format", &["auto", "tsv", "csv"])? {
                "tsv" => Some(Format::Tsv),
                "csv" => Some(Format::Csv),
                _ => None,
            };
            let fraction = |key: &str| -> Result<f64, ConfigError> {
                let v = s.f64(key)?;
                if (0.0..1.0).contains(&v) {
                    Ok(v)
                } else {
                    Err(ConfigError::invalid(key, "must be in [0, 1)"))
                }
            };
            let (val_fraction, test_fraction) =
                (fraction("data.val_fraction")?, fraction("data.test_fraction")?);
            if val_fraction + test_fraction >= 1.0 {
                return Err(ConfigError::invalid(
                    "data.test_fraction",
                    "val and test fractions leave no training data",
                ));
            }
            DataSource::Files {
                path: PathBuf::from(path),
                format,
                k_core: s.usize("data.k_core")?,
                val_fraction,
                test_fraction,
            }
        };

        let model = match s.choice("model.kind", &["mf", "lightgcn"])? {
            "mf" => ModelChoice::Mf,
            _ => ModelChoice::LightGcn,
        };
        let dim = s.usize("model.dim")?;
        if dim == 0 {
            return Err(ConfigError::invalid("model.dim", "must be positive"));
        }

        let sampler = match s.choice("sampler.kind", &["rns", "dns"])? {
            "rns" => SamplerConfig::rns(seed),
            _ => {
                let h = s.usize("sampler.pool_size")?;
                if h == 0 {
                    return Err(ConfigError::invalid("sampler.pool_size", "must be at least 1"));
                }
                SamplerConfig::dns(h, seed)
            }
        };

        let l2 = s.f64("loss.l2")?;
        if l2 < 0.0 {
            return Err(ConfigError::invalid("loss.l2", "must be >= 0"));
        }
        let loss = match s.choice("loss.kind", &["bpr", "hardbpr"])? {
            "bpr" => LossConfig::bpr(l2),
            _ => {
                let curve = PreferenceCurve::new(s.f64("loss.a")?, s.f64("loss.b")?, s.f64("loss.c")?)
                    .map_err(|e| ConfigError::invalid("loss", e.to_string()))?;
                LossConfig::hard_bpr(curve, l2)
            }
        };

        let train = TrainConfig {
            epochs: s.usize("train.epochs")?,
            batch_size: s.usize("train.batch_size")?,
            eval_every: s.usize("train.eval_every")?,
            early_stop_patience: s.usize("train.patience")?,
            k: s.usize("train.k")?,
            learning_rate: s.f64("train.lr")?,
            seed,
            test_excludes_val: s.bool("train.test_excludes_val")?,
        };
        train
            .validate()
            .map_err(|e| ConfigError::invalid("train", e.to_string()))?;

        let per_user = s.usize("analysis.true_negatives_per_user")?;
        let analysis = AnalysisSpec {
            enabled: s.bool("analysis.enabled")?,
            true_negatives_per_user: (per_user > 0).then_some(per_user),
            grid_size: s.usize("analysis.grid_size")?,
        };
        if analysis.grid_size < 2 {
            return Err(ConfigError::invalid("analysis.grid_size", "must be at least 2"));
        }

        Ok(Self {
            data,
            model,
            dim,
            layers: s.usize("model.layers")?,
            sampler,
            loss,
            train,
            analysis,
            seed,
            out: PathBuf::from(s.str("run.out")?),
            settings: s.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic() -> Settings {
        let mut s = Settings::default();
        s.set_str("data.synthetic", "true").unwrap();
        s
    }

    #[test]
    fn defaults_resolve_with_synthetic_data() {
        let cfg = synthetic().resolve().unwrap();
        assert!(matches!(cfg.data, DataSource::Synthetic(_)));
        assert_eq!(cfg.model, ModelChoice::Mf);
        assert_eq!(cfg.train.k, 50);
    }

    #[test]
    fn file_sections_and_dotted_keys_both_parse() {
        let mut a = synthetic();
        a.merge_toml("[loss]\nkind = \"hardbpr\"\nb = -1\n").unwrap();
        let mut b = synthetic();
        b.merge_toml("loss.kind = \"hardbpr\"\nloss.b = -1\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.resolve().unwrap().loss.curve.b(), -1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut s = Settings::default();
        assert_eq!(
            s.merge_toml("[loss]\nkappa = 3\n"),
            Err(ConfigError::UnknownKey("loss.kappa".into()))
        );
        assert!(s.apply_override("nope.x=1").is_err());
        assert!(s.apply_override("loss.a").is_err());
    }

    #[test]
    fn bad_enum_value_names_the_key() {
        let mut s = synthetic();
        s.set_str("loss.kind", "focal").unwrap();
        let msg = s.resolve().unwrap_err().to_string();
        assert!(msg.contains("loss.kind") && msg.contains("focal"), "{msg}");
    }

    #[test]
    fn type_errors_name_the_key() {
        let mut s = synthetic();
        s.set_str("train.epochs", "many").unwrap();
        let msg = s.resolve().unwrap_err().to_string();
        assert!(msg.contains("train.epochs"), "{msg}");
    }

    #[test]
    fn snapshot_round_trips() {
        let mut s = synthetic();
        s.apply_override("loss.a=0.25").unwrap();
        s.apply_override("run.out=/tmp/x y").unwrap();
        let mut back = Settings::default();
        back.merge_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn integers_are_accepted_for_float_keys() {
        let mut s = synthetic();
        s.apply_override("loss.c=2").unwrap();
        s.apply_override("loss.kind=hardbpr").unwrap();
        assert_eq!(s.resolve().unwrap().loss.curve.c(), 2.0);
    }

    #[test]
    fn invalid_curve_is_reported() {
        let mut s = synthetic();
        s.apply_override("loss.kind=hardbpr").unwrap();
        s.apply_override("loss.c=0").unwrap();
        assert!(s.resolve().unwrap_err().to_string().contains("loss"));
    }
}
