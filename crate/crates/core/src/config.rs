//! Experiment configuration: flat `key = value` lines, `#` comments,
//! comma-separated lists.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::{IdMode, SplitSpec};
use crate::model::ModelKind;
use crate::params::Hyperparams;
use crate::synth::SyntheticSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("bad value for {key}: '{value}'")]
    BadValue { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarKind {
    F32,
    F64,
}

impl fmt::Display for ScalarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalarKind::F32 => "f32",
            ScalarKind::F64 => "f64",
        })
    }
}

impl FromStr for ScalarKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(ScalarKind::F32),
            "f64" => Ok(ScalarKind::F64),
            other => Err(format!("unknown scalar '{other}'")),
        }
    }
}

/// The literal dataset value that selects generated planted data.
pub const SYNTHETIC: &str = "synthetic";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Triples file, or `synthetic`.
    pub dataset: String,
    /// Label written to the `dataset` CSV column; defaults to the file stem.
    pub dataset_name: Option<String>,
    pub id_mode: IdMode,
    /// Embedding file for BPER+; generated data brings its own.
    pub embeddings: Option<PathBuf>,
    /// Explanation id map the embedding rows are ordered by.
    pub embedding_map: Option<PathBuf>,
    /// `None` uses each pipeline's default model list.
    pub models: Option<Vec<ModelKind>>,
    pub hyperparams: Hyperparams,
    pub split: SplitSpec,
    pub mu_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub sparsity_ratios: Vec<f64>,
    /// CF neighborhood size `K`.
    pub neighbors: usize,
    /// Explanation cutoff `N`.
    pub top_n: usize,
    /// Item cutoff `M`.
    pub top_m: usize,
    pub grid_dim: Vec<usize>,
    pub grid_learning_rate: Vec<f64>,
    pub grid_regularization: Vec<f64>,
    pub grid_epochs: Vec<usize>,
    pub scalar: ScalarKind,
    pub output: PathBuf,
    pub synth: SyntheticSpec,
}

fn tenths() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: SYNTHETIC.to_owned(),
            dataset_name: None,
            id_mode: IdMode::Raw,
            embeddings: None,
            embedding_map: None,
            models: None,
            hyperparams: Hyperparams::default(),
            split: SplitSpec::default(),
            mu_values: tenths(),
            alpha_values: tenths(),
            sparsity_ratios: vec![0.3, 0.4, 0.5, 0.6, 0.7],
            neighbors: 50,
            top_n: 10,
            top_m: 10,
            grid_dim: Vec::new(),
            grid_learning_rate: Vec::new(),
            grid_regularization: Vec::new(),
            grid_epochs: Vec::new(),
            scalar: ScalarKind::F64,
            output: PathBuf::from("results"),
            synth: SyntheticSpec::default(),
        }
    }
}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "dataset",
    "dataset_name",
    "id_mode",
    "embeddings",
    "embedding_map",
    "models",
    "dim",
    "learning_rate",
    "regularization",
    "epochs",
    "mu",
    "alpha",
    "seed",
    "init_scale",
    "train_projection",
    "train_fraction",
    "validation_fraction",
    "repetitions",
    "split_seed",
    "mu_values",
    "alpha_values",
    "sparsity_ratios",
    "neighbors",
    "top_n",
    "top_m",
    "grid_dim",
    "grid_learning_rate",
    "grid_regularization",
    "grid_epochs",
    "scalar",
    "output",
    "synth_users",
    "synth_items",
    "synth_explanations",
    "synth_dim",
    "synth_records_per_user",
    "synth_explanations_per_record",
    "synth_noise",
    "synth_seed",
    "synth_mu",
    "synth_bias_scale",
    "synth_item_temperature",
    "synth_embedding_dim",
];

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn parse_list<T: FromStr>(value: &str) -> Option<Vec<T>> {
    if value.trim().is_empty() {
        return Some(Vec::new());
    }
    value.split(',').map(|x| x.trim().parse().ok()).collect()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl ExperimentConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let bad = || ConfigError::BadValue {
            key: key.to_owned(),
            value: value.to_owned(),
        };
        fn num<T: FromStr>(v: &str, bad: impl Fn() -> ConfigError) -> Result<T, ConfigError> {
            v.parse().map_err(|_| bad())
        }
        fn list<T: FromStr>(v: &str, bad: impl Fn() -> ConfigError) -> Result<Vec<T>, ConfigError> {
            parse_list(v).ok_or_else(bad)
        }
        let hp = &mut self.hyperparams;
        let sy = &mut self.synth;
        match key {
            "dataset" => self.dataset = value.to_owned(),
            "dataset_name" => self.dataset_name = (!value.is_empty()).then(|| value.to_owned()),
            "id_mode" => self.id_mode = num(value, bad)?,
            "embeddings" => self.embeddings = opt_path(value),
            "embedding_map" => self.embedding_map = opt_path(value),
            "models" => {
                self.models = if value.is_empty() {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|m| m.parse::<ModelKind>())
                            .collect::<Result<_, _>>()
                            .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                    )
                }
            }
            "dim" => hp.dim = num(value, bad)?,
            "learning_rate" => hp.learning_rate = num(value, bad)?,
            "regularization" => hp.regularization = num(value, bad)?,
            "epochs" => hp.epochs = num(value, bad)?,
            "mu" => hp.mu = num(value, bad)?,
            "alpha" => hp.alpha = num(value, bad)?,
            "seed" => hp.seed = num(value, bad)?,
            "init_scale" => hp.init_scale = num(value, bad)?,
            "train_projection" => hp.train_projection = num(value, bad)?,
            "train_fraction" => self.split.train_fraction = num(value, bad)?,
            "validation_fraction" => self.split.validation_fraction = num(value, bad)?,
            "repetitions" => self.split.repetitions = num(value, bad)?,
            "split_seed" => self.split.seed = num(value, bad)?,
            "mu_values" => self.mu_values = list(value, bad)?,
            "alpha_values" => self.alpha_values = list(value, bad)?,
            "sparsity_ratios" => self.sparsity_ratios = list(value, bad)?,
            "neighbors" => self.neighbors = num(value, bad)?,
            "top_n" => self.top_n = num(value, bad)?,
            "top_m" => self.top_m = num(value, bad)?,
            "grid_dim" => self.grid_dim = list(value, bad)?,
            "grid_learning_rate" => self.grid_learning_rate = list(value, bad)?,
            "grid_regularization" => self.grid_regularization = list(value, bad)?,
            "grid_epochs" => self.grid_epochs = list(value, bad)?,
            "scalar" => self.scalar = num(value, bad)?,
            "output" => self.output = PathBuf::from(value),
            "synth_users" => sy.n_users = num(value, bad)?,
            "synth_items" => sy.n_items = num(value, bad)?,
            "synth_explanations" => sy.n_explanations = num(value, bad)?,
            "synth_dim" => sy.dim_true = num(value, bad)?,
            "synth_records_per_user" => sy.records_per_user = num(value, bad)?,
            "synth_explanations_per_record" => sy.explanations_per_record = num(value, bad)?,
            "synth_noise" => sy.noise = num(value, bad)?,
            "synth_seed" => sy.seed = num(value, bad)?,
            "synth_mu" => sy.mu_true = num(value, bad)?,
            "synth_bias_scale" => sy.bias_scale = num(value, bad)?,
            "synth_item_temperature" => sy.item_temperature = num(value, bad)?,
            "synth_embedding_dim" => sy.embedding_dim = num(value, bad)?,
            other => return Err(ConfigError::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    /// Textual form of one field, as accepted by [`set`](Self::set).
    pub fn get(&self, key: &str) -> Option<String> {
        let hp = &self.hyperparams;
        let sy = &self.synth;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "dataset" => self.dataset.clone(),
            "dataset_name" => self.dataset_name.clone().unwrap_or_default(),
            "id_mode" => self.id_mode.to_string(),
            "embeddings" => path(&self.embeddings),
            "embedding_map" => path(&self.embedding_map),
            "models" => self.models.as_deref().map(join).unwrap_or_default(),
            "dim" => hp.dim.to_string(),
            "learning_rate" => hp.learning_rate.to_string(),
            "regularization" => hp.regularization.to_string(),
            "epochs" => hp.epochs.to_string(),
            "mu" => hp.mu.to_string(),
            "alpha" => hp.alpha.to_string(),
            "seed" => hp.seed.to_string(),
            "init_scale" => hp.init_scale.to_string(),
            "train_projection" => hp.train_projection.to_string(),
            "train_fraction" => self.split.train_fraction.to_string(),
            "validation_fraction" => self.split.validation_fraction.to_string(),
            "repetitions" => self.split.repetitions.to_string(),
            "split_seed" => self.split.seed.to_string(),
            "mu_values" => join(&self.mu_values),
            "alpha_values" => join(&self.alpha_values),
            "sparsity_ratios" => join(&self.sparsity_ratios),
            "neighbors" => self.neighbors.to_string(),
            "top_n" => self.top_n.to_string(),
            "top_m" => self.top_m.to_string(),
            "grid_dim" => join(&self.grid_dim),
            "grid_learning_rate" => join(&self.grid_learning_rate),
            "grid_regularization" => join(&self.grid_regularization),
            "grid_epochs" => join(&self.grid_epochs),
            "scalar" => self.scalar.to_string(),
            "output" => self.output.display().to_string(),
            "synth_users" => sy.n_users.to_string(),
            "synth_items" => sy.n_items.to_string(),
            "synth_explanations" => sy.n_explanations.to_string(),
            "synth_dim" => sy.dim_true.to_string(),
            "synth_records_per_user" => sy.records_per_user.to_string(),
            "synth_explanations_per_record" => sy.explanations_per_record.to_string(),
            "synth_noise" => sy.noise.to_string(),
            "synth_seed" => sy.seed.to_string(),
            "synth_mu" => sy.mu_true.to_string(),
            "synth_bias_scale" => sy.bias_scale.to_string(),
            "synth_item_temperature" => sy.item_temperature.to_string(),
            "synth_embedding_dim" => sy.embedding_dim.to_string(),
            _ => return None,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                reason: format!("expected 'key = value', got '{line}'"),
            })?;
            cfg.set(key.trim(), value).map_err(|e| ConfigError::Syntax {
                line: n + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.hyperparams.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.split.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.dataset == SYNTHETIC {
            self.synth.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let Some(v) = self.mu_values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid(format!("mu value {v} not in [0, 1]"));
        }
        if let Some(v) = self.alpha_values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return invalid(format!("alpha value {v} must be >= 0"));
        }
        if let Some(v) = self.sparsity_ratios.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return invalid(format!("sparsity ratio {v} not in (0, 1]"));
        }
        if self.top_n == 0 || self.top_m == 0 {
            return invalid("top_n and top_m must be >= 1".into());
        }
        if self.grid_dim.contains(&0) {
            return invalid("grid_dim entries must be >= 1".into());
        }
        Ok(())
    }

    /// Whether validation-based hyperparameter selection is on.
    pub fn selects_hyperparams(&self) -> bool {
        !(self.grid_dim.is_empty()
            && self.grid_learning_rate.is_empty()
            && self.grid_regularization.is_empty()
            && self.grid_epochs.is_empty())
    }

    /// Every grid point; an empty grid list keeps the configured value.
    pub fn grid(&self) -> Vec<Hyperparams> {
        let base = &self.hyperparams;
        let or = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let or_n = |v: &[usize], d: usize| if v.is_empty() { vec![d] } else { v.to_vec() };
        let mut out = Vec::new();
        for &dim in &or_n(&self.grid_dim, base.dim) {
            for &learning_rate in &or(&self.grid_learning_rate, base.learning_rate) {
                for &regularization in &or(&self.grid_regularization, base.regularization) {
                    for &epochs in &or_n(&self.grid_epochs, base.epochs) {
                        out.push(Hyperparams {
                            dim,
                            learning_rate,
                            regularization,
                            epochs,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }

    /// Name for the CSV `dataset` column.
    pub fn dataset_label(&self) -> String {
        if let Some(n) = &self.dataset_name {
            return n.clone();
        }
        if self.dataset == SYNTHETIC {
            return SYNTHETIC.to_owned();
        }
        Path::new(&self.dataset)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.dataset.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn comments_blank_lines_and_lists() {
        let c = ExperimentConfig::parse(
            "# experiment\n\nmodels = bper, pitf # two\nmu_values = 0, 0.5,1\n grid_dim = 10,20\nepochs=3\n",
        )
        .unwrap();
        assert_eq!(c.models, Some(vec![ModelKind::Bper, ModelKind::Pitf]));
        assert_eq!(c.mu_values, vec![0.0, 0.5, 1.0]);
        assert_eq!(c.hyperparams.epochs, 3);
        assert!(c.selects_hyperparams());
        assert_eq!(c.grid().len(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ExperimentConfig::parse("dim = 3\nnonsense\n").unwrap_err();
        assert!(e.to_string().starts_with("line 2"), "{e}");
        let e = ExperimentConfig::parse("dim = x\n").unwrap_err();
        assert!(e.to_string().contains("dim"), "{e}");
        assert!(ExperimentConfig::parse("colour = red\n").is_err());
        assert!(ExperimentConfig::parse("models = bpr\n").is_err());
    }

    #[test]
    fn validation_rejects_out_of_range_sweeps() {
        let mut c = ExperimentConfig::default();
        c.mu_values.push(1.5);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.sparsity_ratios = vec![0.0];
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![0.0..1.0f64, 1e-6..1e6f64]
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(
            dim in 1usize..100,
            lr in finite(),
            mus in proptest::collection::vec(0.0..=1.0f64, 0..12),
            grid in proptest::collection::vec(finite(), 0..4),
            models in proptest::collection::vec(0usize..10, 0..5),
            seed in any::<u64>(),
            name in "[a-z]{0,8}",
        ) {
            let mut c = ExperimentConfig::default();
            c.hyperparams.dim = dim;
            c.hyperparams.learning_rate = lr;
            c.hyperparams.seed = seed;
            c.mu_values = mus;
            c.grid_regularization = grid;
            c.models = if models.is_empty() { None } else { Some(models.iter().map(|&k| ModelKind::ALL[k]).collect()) };
            c.dataset_name = if name.is_empty() { None } else { Some(name) };
            prop_assert_eq!(ExperimentConfig::parse(&c.serialize()).unwrap(), c);
        }
    }
}
