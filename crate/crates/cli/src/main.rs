use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bper::checkpoint::{Checkpoint, CheckpointError};
use bper::config::{ExperimentConfig, ScalarKind};
use bper::dataset::{self, IdMap, IdMaps, InteractionStore, SplitSpec};
use bper::embfile::EmbeddingFile;
use bper::eval;
use bper::harness::{self, fmt_g, Pipeline};
use bper::model::{train_model, ModelKind, TrainedModel};
use bper::params::EmbeddingTable;
use bper::synth::generate_synthetic;
use bper::Scalar;
use clap::{Args, Parser, Subcommand};

macro_rules! config_flags {
    ($($field:ident),* $(,)?) => {
        /// Overrides for experiment-config keys; each flag is the key with
        /// dashes for underscores.
        #[derive(Args, Debug, Default, Clone)]
        struct ConfigFlags {
            $(
                #[arg(long, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl ConfigFlags {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

config_flags!(
    dataset,
    dataset_name,
    id_mode,
    embeddings,
    embedding_map,
    models,
    dim,
    learning_rate,
    regularization,
    epochs,
    mu,
    alpha,
    seed,
    init_scale,
    train_projection,
    train_fraction,
    validation_fraction,
    repetitions,
    split_seed,
    mu_values,
    alpha_values,
    sparsity_ratios,
    neighbors,
    top_n,
    top_m,
    grid_dim,
    grid_learning_rate,
    grid_regularization,
    grid_epochs,
    scalar,
    output,
    synth_users,
    synth_items,
    synth_explanations,
    synth_dim,
    synth_records_per_user,
    synth_explanations_per_record,
    synth_noise,
    synth_seed,
    synth_mu,
    synth_bias_scale,
    synth_item_temperature,
    synth_embedding_dim,
);

#[derive(Parser, Debug)]
#[command(name = "bper", version, about = "Explanation ranking for recommender systems")]
struct Cli {
    /// Log progress (per-epoch losses) to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Experiment {
    /// `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a triples file into train/valid/test files plus id maps.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Train one model on a split directory and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        out: PathBuf,
        /// Train on train.tsv only, leaving valid.tsv out.
        #[arg(long)]
        exclude_valid: bool,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Evaluate a checkpoint on a split directory's test.tsv.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run the two-stage item-then-explanation protocol.
        #[arg(long)]
        joint: bool,
        #[arg(long)]
        exclude_valid: bool,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Compare models on every repetition's test set.
    Compare(Experiment),
    /// Evaluate the BPER family across the mu list.
    SweepMu(Experiment),
    /// Train joint models across the alpha list.
    SweepAlpha(Experiment),
    /// Train on shrinking fractions of the data.
    Sparsity(Experiment),
    /// Write planted data, its ground truth and synthetic embeddings.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Build summary tables and plot data from result CSVs.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn config_from(path: Option<&Path>, flags: &ConfigFlags) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for (key, value) in flags.pairs() {
        cfg.set(key, value).with_context(|| format!("--{}", key.replace('_', "-")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_split_dir(dir: &Path, split: &dataset::Split, ids: &IdMaps) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    dataset::save_triples(&split.train, ids, &dir.join("train.tsv"))?;
    dataset::save_triples(&split.valid, ids, &dir.join("valid.tsv"))?;
    dataset::save_triples(&split.test, ids, &dir.join("test.tsv"))?;
    ids.save_dir(dir)?;
    Ok(())
}

/// Training store of a split directory (train plus validation unless excluded).
fn load_training(dir: &Path, ids: &IdMaps, exclude_valid: bool) -> Result<InteractionStore> {
    let train = dataset::load_triples_with_ids(&dir.join("train.tsv"), ids)?.store;
    let valid_path = dir.join("valid.tsv");
    if exclude_valid || !valid_path.exists() {
        return Ok(train);
    }
    let valid = dataset::load_triples_with_ids(&valid_path, ids);
    match valid {
        Ok(v) => {
            let mut records = train.records().to_vec();
            records.extend_from_slice(v.store.records());
            Ok(train.with_records(records))
        }
        Err(dataset::DatasetError::Empty) => Ok(train),
        Err(e) => Err(e.into()),
    }
}

fn train_typed<F: Scalar>(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    train: &InteractionStore,
    ids: &IdMaps,
    out: &Path,
) -> Result<()> {
    let embeddings = match &cfg.embeddings {
        Some(path) => {
            let file = EmbeddingFile::load(path)?;
            let map = cfg.embedding_map.as_deref().map(IdMap::load).transpose()?;
            let raw = harness::aligned_embeddings::<F>(&file, &ids.explanations, map.as_ref())?;
            Some(EmbeddingTable::new(raw, cfg.hyperparams.dim))
        }
        None => None,
    };
    let model = train_model::<F>(kind, train, &cfg.hyperparams, cfg.neighbors, embeddings.as_ref())?;
    for note in &model.notes {
        eprintln!("note: {note}");
    }
    let mut ckpt = model.to_checkpoint();
    ckpt.push_meta("hyperparams", harness::hyperparams_label(kind, &cfg.hyperparams, cfg.neighbors));
    ckpt.save(out)?;
    if let (Some(first), Some(last)) = (model.epoch_losses.first(), model.epoch_losses.last()) {
        eprintln!("{kind}: epoch loss {} -> {}", fmt_g(*first), fmt_g(*last));
    }
    Ok(())
}

fn eval_typed<F: Scalar>(
    ckpt: Checkpoint<F>,
    train: &InteractionStore,
    test: &InteractionStore,
    cfg: &ExperimentConfig,
    mu: Option<f64>,
    joint: bool,
) -> Result<Vec<(String, f64)>> {
    let mut model = TrainedModel::<F>::from_checkpoint(&ckpt, Some(train))?;
    if let Some(mu) = mu {
        model.mu = mu;
    }
    let mut out = Vec::new();
    let mut push = |prefix: &str, r: &eval::MetricsReport| {
        for (m, v) in r.metrics() {
            out.push((format!("{prefix}{m}"), v));
        }
        out.push((format!("{prefix}units"), r.unit_count as f64));
    };
    if joint {
        let r = eval::evaluate_joint(&model, &model, train, test, cfg.top_m, cfg.top_n)?;
        push("rec_", &r.recommendation);
        push("exp_", &r.explanation);
    } else {
        let r = eval::evaluate_explanation_ranking(&model, test, cfg.top_n)?;
        push("", &r);
        out.push(("hit".into(), eval::explanation_hit_rate(&model, test, cfg.top_n)));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split {
            input,
            out,
            repetition,
            flags,
        } => {
            let cfg = config_from(None, &flags)?;
            let loaded = dataset::load_triples(&input, cfg.id_mode)?;
            if loaded.duplicates > 0 {
                eprintln!("warning: {} duplicate lines ignored", loaded.duplicates);
            }
            let spec = SplitSpec {
                repetitions: cfg.split.repetitions.max(repetition + 1),
                ..cfg.split.clone()
            };
            let split = dataset::split(&loaded.store, &spec, repetition)?;
            write_split_dir(&out, &split, &loaded.ids)?;
            eprintln!(
                "train {} / valid {} / test {} records ({} moved by coverage repair)",
                split.train.records().len(),
                split.valid.records().len(),
                split.test.records().len(),
                split.repaired
            );
        }
        Command::Train {
            data,
            model,
            out,
            exclude_valid,
            flags,
        } => {
            let cfg = config_from(None, &flags)?;
            let ids = IdMaps::load_dir(&data)?;
            let train = load_training(&data, &ids, exclude_valid)?;
            match cfg.scalar {
                ScalarKind::F64 => train_typed::<f64>(&cfg, model, &train, &ids, &out)?,
                ScalarKind::F32 => train_typed::<f32>(&cfg, model, &train, &ids, &out)?,
            }
        }
        Command::Eval {
            data,
            checkpoint,
            joint,
            exclude_valid,
            flags,
        } => {
            let cfg = config_from(None, &flags)?;
            let mu = flags.mu.as_deref().map(str::parse::<f64>).transpose().context("--mu")?;
            let ids = IdMaps::load_dir(&data)?;
            let train = load_training(&data, &ids, exclude_valid)?;
            let test = dataset::load_triples_with_ids(&data.join("test.tsv"), &ids)?.store;
            let text = std::fs::read_to_string(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let metrics = match Checkpoint::<f64>::from_text(&text) {
                Ok(c) => eval_typed(c, &train, &test, &cfg, mu, joint)?,
                Err(CheckpointError::ScalarMismatch { .. }) => {
                    eval_typed(Checkpoint::<f32>::from_text(&text)?, &train, &test, &cfg, mu, joint)?
                }
                Err(e) => return Err(e.into()),
            };
            let mut text = String::from("metric,value\n");
            for (m, v) in metrics {
                text.push_str(&format!("{m},{}\n", fmt_g(v)));
            }
            emit(&text)?;
        }
        Command::Compare(e) => experiment(Pipeline::Compare, &e)?,
        Command::SweepMu(e) => experiment(Pipeline::MuSweep, &e)?,
        Command::SweepAlpha(e) => experiment(Pipeline::AlphaSweep, &e)?,
        Command::Sparsity(e) => experiment(Pipeline::Sparsity, &e)?,
        Command::Synth { out, flags } => {
            let cfg = config_from(None, &flags)?;
            let data = generate_synthetic(&cfg.synth)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            dataset::save_triples(&data.store, &data.ids, &out.join("triples.tsv"))?;
            data.ids.save_dir(&out)?;
            data.embeddings.save(&out.join("embeddings.bin"))?;
            let mut truth = Checkpoint::<f64>::default();
            truth.push_meta("mu_true", data.mu_true);
            truth.push_matrix("P", &data.truth.user);
            truth.push_matrix("Q", &data.truth.item);
            truth.push_matrix("OU", &data.truth.expl_user);
            truth.push_matrix("OI", &data.truth.expl_item);
            truth.push_vector("bU", &data.truth.bias_expl_user);
            truth.push_vector("bI", &data.truth.bias_expl_item);
            truth.push_vector("b", &data.truth.bias_item);
            truth.save(&out.join("truth.ckpt"))?;
            eprintln!(
                "{} users, {} items, {} explanations, {} triples",
                data.store.n_users(),
                data.store.n_items(),
                data.store.n_explanations(),
                data.store.triple_count()
            );
        }
        Command::Report { dir } => {
            let mut text = String::new();
            for path in harness::report(&dir)? {
                text.push_str(&format!("{}\n", path.display()));
            }
            emit(&text)?;
        }
    }
    Ok(())
}

fn experiment(pipeline: Pipeline, e: &Experiment) -> Result<()> {
    let cfg = config_from(e.config.as_deref(), &e.flags)?;
    if cfg.models.as_ref().is_some_and(|m| m.is_empty()) {
        bail!("model list is empty");
    }
    let path = harness::run_and_write(pipeline, &cfg)?;
    emit(&format!("{}\n", path.display()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// Error chain on one line, skipping causes already quoted by their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", line.trim());
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
