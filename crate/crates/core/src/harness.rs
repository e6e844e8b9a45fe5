//! Experiment pipelines and result files.
//!
//! Results are long-format CSV with the columns
//! `dataset,model,repetition,hyperparams,metric,value`. Per-repetition rows
//! come first, then one `mean` row per (model, hyperparams, metric).
//! `hyperparams` is a `;`-separated `key=value` list. Floats carry six
//! significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ScalarKind, SYNTHETIC};
use crate::dataset::{self, DatasetError, IdMap, InteractionStore, Split};
use crate::embfile::{EmbeddingError, EmbeddingFile};
use crate::eval::{self, EvalError, MetricsReport};
use crate::matrix::Matrix;
use crate::model::{train_model, ModelError, ModelKind, TrainedModel};
use crate::params::{EmbeddingTable, Hyperparams};
use crate::scalar::Scalar;
use crate::synth::{generate_synthetic, SynthError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{0}")]
    Invalid(String),
    #[error("no result CSVs in {0}")]
    NoResults(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// `%g`-style formatting with six significant digits.
pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return "0".to_owned();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    };
    let exp = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        let s = format!("{v:.5e}");
        let (mantissa, e) = s.split_once('e').expect("scientific format");
        format!("{}e{e}", trim(mantissa.to_owned()))
    } else {
        trim(format!("{:.*}", (5 - exp).max(0) as usize, v))
    }
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub dataset: String,
    pub model: String,
    /// `None` marks a mean row.
    pub repetition: Option<usize>,
    pub hyperparams: String,
    pub metric: String,
    pub value: f64,
}

pub const CSV_HEADER: &str = "dataset,model,repetition,hyperparams,metric,value";

/// Appends mean rows (grouped by dataset, model, hyperparams, metric in
/// first-seen order) and renders the CSV.
pub fn render_csv(rows: &[Row]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_HEADER}");
    let mut groups: Vec<(Row, f64, usize)> = Vec::new();
    let mut index: BTreeMap<(String, String, String, String), usize> = BTreeMap::new();
    for r in rows {
        let rep = r.repetition.map(|x| x.to_string()).unwrap_or_else(|| "mean".into());
        let _ = writeln!(
            out,
            "{},{},{rep},{},{},{}",
            r.dataset,
            r.model,
            r.hyperparams,
            r.metric,
            fmt_g(r.value)
        );
        if r.repetition.is_none() {
            continue;
        }
        let key = (r.dataset.clone(), r.model.clone(), r.hyperparams.clone(), r.metric.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push((r.clone(), 0.0, 0));
            groups.len() - 1
        });
        groups[slot].1 += r.value;
        groups[slot].2 += 1;
    }
    for (r, sum, n) in groups {
        let _ = writeln!(
            out,
            "{},{},mean,{},{},{}",
            r.dataset,
            r.model,
            r.hyperparams,
            r.metric,
            fmt_g(sum / n as f64)
        );
    }
    out
}

/// Parses a CSV written by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<Row>, HarnessError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(HarnessError::Invalid("missing CSV header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || HarnessError::Invalid(format!("CSV line {}: '{l}'", n + 2));
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(Row {
                dataset: f[0].to_owned(),
                model: f[1].to_owned(),
                repetition: if f[2] == "mean" { None } else { Some(f[2].parse().map_err(|_| bad())?) },
                hyperparams: f[3].to_owned(),
                metric: f[4].to_owned(),
                value: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Value of `key` in a `k=v;k=v` hyperparameter label.
pub fn label_value(label: &str, key: &str) -> Option<f64> {
    label
        .split(';')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.parse().ok())
}

/// Hyperparameter label of a model, without per-repetition seeds.
pub fn hyperparams_label(kind: ModelKind, hp: &Hyperparams, neighbors: usize) -> String {
    match kind {
        ModelKind::Rand => format!("seed={}", hp.seed),
        ModelKind::Rucf | ModelKind::Ricf => format!("K={neighbors}"),
        _ => {
            let mut s = format!(
                "d={};lr={};reg={};T={}",
                hp.dim, hp.learning_rate, hp.regularization, hp.epochs
            );
            if kind.uses_mu() {
                let _ = write!(s, ";mu={}", hp.mu);
            }
            if kind.is_joint() {
                let _ = write!(s, ";alpha={}", hp.alpha);
            }
            if kind == ModelKind::BperPlus && !hp.train_projection {
                s.push_str(";projection=frozen");
            }
            s
        }
    }
}

/// Training seed of repetition `rep`, so repetitions differ in initialization
/// and sampling as well as in their split.
pub fn training_seed(seed: u64, rep: usize) -> u64 {
    seed ^ (rep as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Embedding rows re-ordered to the store's explanation indices.
///
/// With `map`, row `k` of the file belongs to the explanation whose raw id
/// has index `k` in `map`; otherwise rows are taken to be in store order.
pub fn aligned_embeddings<F: Scalar>(
    file: &EmbeddingFile,
    store_ids: &IdMap,
    map: Option<&IdMap>,
) -> Result<Matrix<F>, HarnessError> {
    let Some(map) = map else {
        return Ok(file.to_matrix(store_ids.len())?);
    };
    let full = file.to_matrix::<F>(map.len())?;
    let mut out = Matrix::zeros(store_ids.len(), file.dim);
    for e in 0..store_ids.len() {
        let raw = store_ids.raw(e);
        let row = map
            .get(raw)
            .ok_or_else(|| HarnessError::Invalid(format!("explanation '{raw}' missing from the embedding map")))?;
        out.row_mut(e).copy_from_slice(full.row(row));
    }
    Ok(out)
}

/// Data shared by every job of one pipeline run.
pub struct Prepared<F> {
    pub label: String,
    pub store: InteractionStore,
    pub embeddings: Option<Matrix<F>>,
    pub splits: Vec<Split>,
}

pub fn prepare<F: Scalar>(cfg: &ExperimentConfig) -> Result<Prepared<F>, HarnessError> {
    cfg.validate()?;
    let (store, embeddings) = if cfg.dataset == SYNTHETIC {
        let data = generate_synthetic(&cfg.synth)?;
        let emb = data.embeddings.to_matrix(data.store.n_explanations())?;
        (data.store, Some(emb))
    } else {
        let loaded = dataset::load_triples(Path::new(&cfg.dataset), cfg.id_mode)?;
        let emb = match &cfg.embeddings {
            Some(path) => {
                let file = EmbeddingFile::load(path)?;
                let map = cfg.embedding_map.as_deref().map(IdMap::load).transpose()?;
                Some(aligned_embeddings(&file, &loaded.ids.explanations, map.as_ref())?)
            }
            None => None,
        };
        (loaded.store, emb)
    };
    let splits = (0..cfg.split.repetitions)
        .map(|rep| dataset::split(&store, &cfg.split, rep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Prepared {
        label: cfg.dataset_label().replace(',', "_"),
        store,
        embeddings,
        splits,
    })
}

fn models_or(cfg: &ExperimentConfig, default: &[ModelKind], have_embeddings: bool) -> Vec<ModelKind> {
    match &cfg.models {
        Some(m) => m.clone(),
        None => default
            .iter()
            .copied()
            .filter(|&k| {
                let keep = k != ModelKind::BperPlus || have_embeddings;
                if !keep {
                    log::warn!("no embeddings configured; leaving bper+ out");
                }
                keep
            })
            .collect(),
    }
}

struct Job<'a, F> {
    cfg: &'a ExperimentConfig,
    prep: &'a Prepared<F>,
    rep: usize,
    kind: ModelKind,
}

impl<'a, F: Scalar> Job<'a, F> {
    fn hp(&self) -> Hyperparams {
        Hyperparams {
            seed: training_seed(self.cfg.hyperparams.seed, self.rep),
            ..self.cfg.hyperparams.clone()
        }
    }

    fn train(&self, store: &InteractionStore, hp: &Hyperparams) -> Result<TrainedModel<F>, HarnessError> {
        let emb = self.prep.embeddings.as_ref().map(|raw| EmbeddingTable::new(raw.clone(), hp.dim));
        if self.kind == ModelKind::BperPlus && emb.is_none() {
            return Err(HarnessError::Invalid("bper+ needs an embedding file (set 'embeddings')".into()));
        }
        let model = train_model(self.kind, store, hp, self.cfg.neighbors, emb.as_ref())?;
        for note in &model.notes {
            log::info!("{} rep {}: {note}", self.kind, self.rep);
        }
        Ok(model)
    }

    /// Grid search on the validation carve-out when enabled, else the
    /// configured hyperparameters. Returns the chosen values with the
    /// training seed of this repetition.
    fn choose(&self) -> Result<Hyperparams, HarnessError> {
        let base = self.hp();
        let split = &self.prep.splits[self.rep];
        if !self.cfg.selects_hyperparams() || !self.kind.is_factorization() || split.valid.is_empty() {
            return Ok(base);
        }
        let mut best: Option<(f64, Hyperparams)> = None;
        for point in self.cfg.grid() {
            let hp = Hyperparams { seed: base.seed, ..point };
            let model = self.train(&split.train, &hp)?;
            let f1 = eval::evaluate_explanation_ranking(&model, &split.valid, self.cfg.top_n)?.f1;
            log::info!("{} rep {}: validation f1 {f1:.6} at {}", self.kind, self.rep, hyperparams_label(self.kind, &hp, self.cfg.neighbors));
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, hp));
            }
        }
        Ok(best.map(|(_, hp)| hp).unwrap_or(base))
    }

    fn row(&self, model: &str, hyperparams: &str, metric: &str, value: f64) -> Row {
        Row {
            dataset: self.prep.label.clone(),
            model: model.to_owned(),
            repetition: Some(self.rep),
            hyperparams: hyperparams.to_owned(),
            metric: metric.to_owned(),
            value,
        }
    }

    fn report_rows(&self, model: &str, label: &str, prefix: &str, r: &MetricsReport) -> Vec<Row> {
        let mut rows: Vec<Row> = r
            .metrics()
            .iter()
            .map(|(m, v)| self.row(model, label, &format!("{prefix}{m}"), *v))
            .collect();
        rows.push(self.row(model, label, &format!("{prefix}units"), r.unit_count as f64));
        rows
    }
}

fn run_jobs<T: Sync, R: Send>(
    jobs: Vec<T>,
    f: impl Fn(&T) -> Result<Vec<R>, HarnessError> + Sync + Send,
) -> Result<Vec<R>, HarnessError> {
    let parts = jobs.par_iter().map(f).collect::<Result<Vec<_>, _>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub const COMPARE_MODELS: [ModelKind; 7] = [
    ModelKind::Rand,
    ModelKind::Rucf,
    ModelKind::Ricf,
    ModelKind::Cd,
    ModelKind::Pitf,
    ModelKind::Bper,
    ModelKind::BperPlus,
];

/// Main comparison: every model on every repetition's test set.
pub fn run_comparison<F: Scalar>(cfg: &ExperimentConfig, prep: &Prepared<F>) -> Result<Vec<Row>, HarnessError> {
    let models = models_or(cfg, &COMPARE_MODELS, prep.embeddings.is_some());
    let jobs: Vec<Job<F>> = (0..prep.splits.len())
        .flat_map(|rep| models.iter().map(move |&kind| Job { cfg, prep, rep, kind }))
        .collect();
    run_jobs(jobs, |job| {
        let hp = job.choose()?;
        let split = &prep.splits[job.rep];
        let model = job.train(&split.full_train(), &hp)?;
        let report = eval::evaluate_explanation_ranking(&model, &split.test, cfg.top_n)?;
        let shown = Hyperparams {
            seed: cfg.hyperparams.seed,
            ..hp
        };
        let label = hyperparams_label(job.kind, &shown, cfg.neighbors);
        let mut rows = job.report_rows(job.kind.name(), &label, "", &report);
        let hit = eval::explanation_hit_rate(&model, &split.test, cfg.top_n);
        rows.push(job.row(job.kind.name(), &label, "hit", hit));
        Ok(rows)
    })
}

/// μ sweep: one training run per repetition, evaluated at every μ.
pub fn run_mu_sweep<F: Scalar>(cfg: &ExperimentConfig, prep: &Prepared<F>) -> Result<Vec<Row>, HarnessError> {
    let models = models_or(cfg, &[ModelKind::Bper], prep.embeddings.is_some());
    if let Some(k) = models.iter().find(|k| !k.uses_mu()) {
        return Err(HarnessError::Invalid(format!("{k} has no mu to sweep")));
    }
    let jobs: Vec<Job<F>> = (0..prep.splits.len())
        .flat_map(|rep| models.iter().map(move |&kind| Job { cfg, prep, rep, kind }))
        .collect();
    run_jobs(jobs, |job| {
        let hp = job.hp();
        let split = &prep.splits[job.rep];
        let model = job.train(&split.full_train(), &hp)?;
        let mut rows = Vec::new();
        for &mu in &cfg.mu_values {
            let label = hyperparams_label(job.kind, &Hyperparams { mu, ..cfg.hyperparams.clone() }, cfg.neighbors);
            let report = eval::evaluate_explanation_ranking(&model.at_mu(mu), &split.test, cfg.top_n)?;
            rows.extend(job.report_rows(job.kind.name(), &label, "", &report));
        }
        Ok(rows)
    })
}

/// α sweep of joint models under the two-stage protocol. Each repetition
/// also emits a non-joint reference: items from the α = 0 model (plain
/// BPR) with explanations from the explanation-only counterpart.
pub fn run_alpha_sweep<F: Scalar>(cfg: &ExperimentConfig, prep: &Prepared<F>) -> Result<Vec<Row>, HarnessError> {
    let models = models_or(cfg, &[ModelKind::BperJ], prep.embeddings.is_some());
    if let Some(k) = models.iter().find(|k| !k.is_joint()) {
        return Err(HarnessError::Invalid(format!("{k} is not a joint model")));
    }
    let mut jobs: Vec<(Job<F>, Option<f64>)> = Vec::new();
    for rep in 0..prep.splits.len() {
        for &kind in &models {
            for &alpha in &cfg.alpha_values {
                jobs.push((Job { cfg, prep, rep, kind }, Some(alpha)));
            }
            jobs.push((Job { cfg, prep, rep, kind }, None));
        }
    }
    run_jobs(jobs, |(job, alpha)| {
        let split = &prep.splits[job.rep];
        let train = split.full_train();
        let item_hp = Hyperparams {
            alpha: alpha.unwrap_or(0.0),
            ..job.hp()
        };
        let items = job.train(&train, &item_hp)?;
        let shown = Hyperparams {
            alpha: item_hp.alpha,
            ..cfg.hyperparams.clone()
        };
        match alpha {
            Some(alpha) => {
                let report = eval::evaluate_joint(&items, &items, &train, &split.test, cfg.top_m, cfg.top_n)?;
                let label = hyperparams_label(job.kind, &shown, cfg.neighbors);
                let mut rows = job.report_rows(job.kind.name(), &label, "rec_", &report.recommendation);
                rows.extend(job.report_rows(job.kind.name(), &label, "exp_", &report.explanation));
                rows.push(job.row(job.kind.name(), &label, "reference_only", f64::from(u8::from(*alpha == 0.0))));
                Ok(rows)
            }
            None => {
                let expl_kind = job.kind.non_joint().expect("joint model");
                let expl_job = Job { kind: expl_kind, ..*job };
                let expl = expl_job.train(&train, &job.hp())?;
                let report = eval::evaluate_joint(&items, &expl, &train, &split.test, cfg.top_m, cfg.top_n)?;
                let label = format!(
                    "{};items={}@alpha=0",
                    hyperparams_label(expl_kind, &cfg.hyperparams, cfg.neighbors),
                    job.kind
                );
                let name = format!("{expl_kind}/non-joint");
                let mut rows = job.report_rows(&name, &label, "rec_", &report.recommendation);
                rows.extend(job.report_rows(&name, &label, "exp_", &report.explanation));
                Ok(rows)
            }
        }
    })
}

pub const SPARSITY_MODELS: [ModelKind; 3] = [ModelKind::Pitf, ModelKind::Bper, ModelKind::BperPlus];

/// Training-ratio ablation against each repetition's untouched test set.
///
/// Ratios at or above the split's train fraction use the full training
/// split unchanged, so that row coincides with the comparison run.
pub fn run_sparsity<F: Scalar>(cfg: &ExperimentConfig, prep: &Prepared<F>) -> Result<Vec<Row>, HarnessError> {
    let models = models_or(cfg, &SPARSITY_MODELS, prep.embeddings.is_some());
    let whole = prep.store.triple_count();
    let mut jobs = Vec::new();
    for rep in 0..prep.splits.len() {
        for (ri, &ratio) in cfg.sparsity_ratios.iter().enumerate() {
            for &kind in &models {
                jobs.push((Job { cfg, prep, rep, kind }, ri, ratio));
            }
        }
    }
    run_jobs(jobs, |(job, ri, ratio)| {
        let split = &prep.splits[job.rep];
        let full = split.full_train();
        let train = if *ratio >= cfg.split.train_fraction - 1e-12 {
            full
        } else {
            let seed = training_seed(cfg.split.repetition_seed(job.rep), *ri);
            let target = (ratio * whole as f64).round() as usize;
            if target > full.triple_count() {
                log::warn!(
                    "ratio {ratio}: target {target} exceeds the {} training triples; using all of them",
                    full.triple_count()
                );
                full
            } else {
                dataset::subsample_training(&full, *ratio, whole, seed)?
            }
        };
        let hp = job.hp();
        let model = job.train(&train, &hp)?;
        let report = eval::evaluate_explanation_ranking(&model, &split.test, cfg.top_n)?;
        let label = format!(
            "{};ratio={ratio}",
            hyperparams_label(job.kind, &cfg.hyperparams, cfg.neighbors)
        );
        let mut rows = job.report_rows(job.kind.name(), &label, "", &report);
        rows.push(job.row(job.kind.name(), &label, "triples", train.triple_count() as f64));
        Ok(rows)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    Compare,
    MuSweep,
    AlphaSweep,
    Sparsity,
}

impl Pipeline {
    pub fn file_name(self) -> &'static str {
        match self {
            Pipeline::Compare => "compare.csv",
            Pipeline::MuSweep => "mu_sweep.csv",
            Pipeline::AlphaSweep => "alpha_sweep.csv",
            Pipeline::Sparsity => "sparsity.csv",
        }
    }
}

fn run_typed<F: Scalar>(pipeline: Pipeline, cfg: &ExperimentConfig) -> Result<Vec<Row>, HarnessError> {
    let prep = prepare::<F>(cfg)?;
    match pipeline {
        Pipeline::Compare => run_comparison(cfg, &prep),
        Pipeline::MuSweep => run_mu_sweep(cfg, &prep),
        Pipeline::AlphaSweep => run_alpha_sweep(cfg, &prep),
        Pipeline::Sparsity => run_sparsity(cfg, &prep),
    }
}

/// Runs a pipeline at the configured precision.
pub fn run_pipeline(pipeline: Pipeline, cfg: &ExperimentConfig) -> Result<Vec<Row>, HarnessError> {
    match cfg.scalar {
        ScalarKind::F64 => run_typed::<f64>(pipeline, cfg),
        ScalarKind::F32 => run_typed::<f32>(pipeline, cfg),
    }
}

/// Runs a pipeline and writes its CSV (and the effective config) into the
/// output directory. Returns the CSV path.
pub fn run_and_write(pipeline: Pipeline, cfg: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    let rows = run_pipeline(pipeline, cfg)?;
    std::fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;
    let config_path = cfg.output.join(pipeline.file_name().replace(".csv", ".config"));
    std::fs::write(&config_path, cfg.serialize()).map_err(io_err(&config_path))?;
    let path = cfg.output.join(pipeline.file_name());
    std::fs::write(&path, render_csv(&rows)).map_err(io_err(&path))?;
    Ok(path)
}

fn mean_rows(rows: &[Row]) -> impl Iterator<Item = &Row> {
    rows.iter().filter(|r| r.repetition.is_none())
}

/// Wide table: one line per (dataset, model, metric), one column per sweep
/// value (in first-seen order). Rows without the sweep key repeat their
/// value across every column.
fn curve(rows: &[Row], key: &str, metrics: &[&str]) -> String {
    let mut columns: Vec<f64> = Vec::new();
    for r in mean_rows(rows) {
        if let Some(v) = label_value(&r.hyperparams, key) {
            if !columns.contains(&v) {
                columns.push(v);
            }
        }
    }
    let mut lines: Vec<((String, String, String), Vec<Option<f64>>)> = Vec::new();
    for r in mean_rows(rows).filter(|r| metrics.contains(&r.metric.as_str())) {
        let id = (r.dataset.clone(), r.model.clone(), r.metric.clone());
        let pos = match lines.iter().position(|(k, _)| *k == id) {
            Some(p) => p,
            None => {
                lines.push((id, vec![None; columns.len()]));
                lines.len() - 1
            }
        };
        match label_value(&r.hyperparams, key) {
            Some(v) => {
                let c = columns.iter().position(|x| *x == v).expect("collected above");
                lines[pos].1[c] = Some(r.value);
            }
            None => lines[pos].1.iter_mut().for_each(|x| *x = Some(r.value)),
        }
    }
    let mut out = String::from("dataset\tmodel\tmetric");
    for c in &columns {
        let _ = write!(out, "\t{key}={}", fmt_g(*c));
    }
    out.push('\n');
    for ((d, m, metric), values) in lines {
        let _ = write!(out, "{d}\t{m}\t{metric}");
        for v in values {
            let _ = write!(out, "\t{}", v.map(fmt_g).unwrap_or_else(|| "nan".into()));
        }
        out.push('\n');
    }
    out
}

fn summary(rows: &[Row]) -> String {
    let metrics = ["ndcg", "precision", "recall", "f1", "hit", "units"];
    let mut out = String::from("dataset\tmodel\thyperparams");
    for m in metrics {
        let _ = write!(out, "\t{m}");
    }
    out.push('\n');
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in mean_rows(rows) {
        let k = (r.dataset.clone(), r.model.clone(), r.hyperparams.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (d, m, h) in keys {
        let _ = write!(out, "{d}\t{m}\t{h}");
        for metric in metrics {
            let v = mean_rows(rows)
                .find(|r| r.dataset == d && r.model == m && r.hyperparams == h && r.metric == metric)
                .map(|r| fmt_g(r.value))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes summary tables and plot data next to the CSVs found in `dir`.
/// Returns the written paths.
pub fn report(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let read = |name: &str| -> Result<Option<Vec<Row>>, HarnessError> {
        let path = dir.join(name);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        parse_csv(&text).map(Some)
    };
    let plain = ["ndcg", "precision", "recall", "f1"];
    let joint = [
        "rec_ndcg",
        "rec_precision",
        "rec_recall",
        "rec_f1",
        "exp_ndcg",
        "exp_precision",
        "exp_recall",
        "exp_f1",
    ];
    let mut outputs: Vec<(&str, String)> = Vec::new();
    if let Some(rows) = read(Pipeline::Compare.file_name())? {
        outputs.push(("summary.tsv", summary(&rows)));
    }
    if let Some(rows) = read(Pipeline::MuSweep.file_name())? {
        outputs.push(("mu_curve.dat", curve(&rows, "mu", &plain)));
    }
    if let Some(rows) = read(Pipeline::AlphaSweep.file_name())? {
        outputs.push(("alpha_curve.dat", curve(&rows, "alpha", &joint)));
    }
    if let Some(rows) = read(Pipeline::Sparsity.file_name())? {
        outputs.push(("sparsity_curve.dat", curve(&rows, "ratio", &plain)));
    }
    if outputs.is_empty() {
        return Err(HarnessError::NoResults(dir.display().to_string()));
    }
    let mut written = Vec::new();
    for (name, text) in outputs {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(0.123456789), "0.123457");
        assert_eq!(fmt_g(123456.7), "123457");
        assert_eq!(fmt_g(1234567.0), "1.23457e6");
        assert_eq!(fmt_g(0.00001234567), "1.23457e-5");
        assert_eq!(fmt_g(0.0001234567), "0.000123457");
        assert_eq!(fmt_g(-2.5), "-2.5");
    }

    fn row(model: &str, rep: usize, metric: &str, value: f64) -> Row {
        Row {
            dataset: "toy".into(),
            model: model.into(),
            repetition: Some(rep),
            hyperparams: "d=2;mu=0.5".into(),
            metric: metric.into(),
            value,
        }
    }

    #[test]
    fn two_models_five_reps_give_two_mean_rows() {
        let rows: Vec<Row> = (0..5)
            .flat_map(|rep| [row("a", rep, "f1", rep as f64), row("b", rep, "f1", 1.0)])
            .collect();
        let csv = render_csv(&rows);
        let parsed = parse_csv(&csv).unwrap();
        assert_eq!(parsed.len(), 12);
        let means: Vec<&Row> = parsed.iter().filter(|r| r.repetition.is_none()).collect();
        assert_eq!(means.len(), 2);
        assert_eq!(means[0].value, 2.0);
        assert_eq!(means[1].value, 1.0);
        assert_eq!(label_value(&means[0].hyperparams, "mu"), Some(0.5));
        assert_eq!(label_value(&means[0].hyperparams, "alpha"), None);
    }

    #[test]
    fn report_on_empty_dir_fails_and_curves_match_sweeps() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(dir.path()), Err(HarnessError::NoResults(_))));
        let rows: Vec<Row> = [0.0, 0.5, 1.0]
            .iter()
            .flat_map(|&mu| {
                let mut r = row("bper", 0, "f1", mu);
                r.hyperparams = format!("d=2;mu={mu}");
                [r]
            })
            .collect();
        std::fs::write(dir.path().join("mu_sweep.csv"), render_csv(&rows)).unwrap();
        let out = report(dir.path()).unwrap();
        let first = std::fs::read_to_string(&out[0]).unwrap();
        for line in first.lines() {
            assert_eq!(line.split('\t').count(), 3 + 3);
        }
        report(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(&out[0]).unwrap(), first);
    }
}
