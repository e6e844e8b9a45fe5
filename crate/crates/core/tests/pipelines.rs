mod common;

use bper::config::ExperimentConfig;
use bper::harness::{self, render_csv, run_and_write, run_pipeline, Pipeline};
use bper::model::ModelKind;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.synth.n_users = 80;
    cfg.synth.n_items = 50;
    cfg.synth.n_explanations = 60;
    cfg.synth.records_per_user = 8;
    cfg.hyperparams.dim = 4;
    cfg.hyperparams.epochs = 5;
    cfg.split.repetitions = 2;
    cfg
}

const ALL: [Pipeline; 4] = [Pipeline::Compare, Pipeline::MuSweep, Pipeline::AlphaSweep, Pipeline::Sparsity];

#[test]
fn reruns_are_byte_identical() {
    let mut cfg = tiny();
    cfg.models = None;
    for pipeline in ALL {
        let mut cfg = cfg.clone();
        if pipeline == Pipeline::Compare {
            cfg.models = Some(vec![ModelKind::Rand, ModelKind::Rucf, ModelKind::Pitf, ModelKind::Bper]);
        }
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        cfg.output = a.path().to_path_buf();
        let pa = run_and_write(pipeline, &cfg).unwrap();
        cfg.output = b.path().to_path_buf();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let pb = pool.install(|| run_and_write(pipeline, &cfg)).unwrap();
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap(), "{pipeline:?}");
    }
}

#[test]
fn comparison_has_rep_and_mean_rows() {
    let mut cfg = tiny();
    cfg.models = Some(vec![ModelKind::Rand, ModelKind::Bper]);
    let rows = run_pipeline(Pipeline::Compare, &cfg).unwrap();
    let csv = render_csv(&rows);
    let f1: Vec<&str> = csv.lines().filter(|l| l.contains(",f1,")).collect();
    assert_eq!(f1.len(), 2 * 2 + 2);
    assert_eq!(f1.iter().filter(|l| l.contains(",mean,")).count(), 2);
    assert_eq!(harness::parse_csv(&csv).unwrap().len(), csv.lines().count() - 1);
}

#[test]
fn mu_sweep_covers_endpoints() {
    let cfg = tiny();
    let rows = run_pipeline(Pipeline::MuSweep, &cfg).unwrap();
    for mu in ["mu=0", "mu=1"] {
        assert!(common::mean_of(&rows, "bper", mu, "ndcg").is_some(), "{mu}");
    }
    let labels: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.hyperparams.as_str()).collect();
    assert_eq!(labels.len(), cfg.mu_values.len());
}

#[test]
fn alpha_zero_is_flagged_reference_only() {
    let mut cfg = tiny();
    cfg.alpha_values = vec![0.0, 0.5, 1.0];
    let rows = run_pipeline(Pipeline::AlphaSweep, &cfg).unwrap();
    assert_eq!(common::mean_of(&rows, "bper-j", "alpha=0", "reference_only"), Some(1.0));
    assert_eq!(common::mean_of(&rows, "bper-j", "alpha=0.5", "reference_only"), Some(0.0));
    assert!(common::mean_of(&rows, "bper/non-joint", "", "exp_f1").is_some());
}

#[test]
fn full_ratio_row_equals_comparison_row() {
    let mut cfg = tiny();
    cfg.models = Some(vec![ModelKind::Bper]);
    cfg.sparsity_ratios = vec![0.3, 0.7];
    let sparse = run_pipeline(Pipeline::Sparsity, &cfg).unwrap();
    let compare = run_pipeline(Pipeline::Compare, &cfg).unwrap();
    for rep in 0..2 {
        let pick = |rows: &[harness::Row], extra: &str| {
            rows.iter()
                .find(|r| r.repetition == Some(rep) && r.metric == "f1" && r.hyperparams.contains(extra))
                .map(|r| r.value)
                .unwrap()
        };
        assert_eq!(pick(&sparse, "ratio=0.7"), pick(&compare, ""));
    }
}

#[test]
fn report_tables() {
    let dir = tempfile::tempdir().unwrap();
    assert!(harness::report(dir.path()).is_err());
    let mut cfg = tiny();
    cfg.output = dir.path().to_path_buf();
    cfg.mu_values = vec![0.0, 0.5, 1.0];
    run_and_write(Pipeline::MuSweep, &cfg).unwrap();
    let first = harness::report(dir.path()).unwrap();
    let curve = std::fs::read_to_string(dir.path().join("mu_curve.dat")).unwrap();
    let snapshot: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let second = harness::report(dir.path()).unwrap();
    assert_eq!(first, second);
    assert_eq!(snapshot, second.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
    for line in curve.lines().filter(|l| !l.starts_with('#')) {
        assert_eq!(line.split_whitespace().count(), 3 + 3, "{line}");
    }
}

/// CD scores a planted BPER signal at about chance level.
#[test]
fn cd_is_far_below_bper_on_planted_data() {
    let mut cfg = tiny();
    cfg.synth.n_users = 200;
    cfg.synth.n_items = 120;
    cfg.synth.n_explanations = 150;
    cfg.synth.records_per_user = 15;
    cfg.hyperparams.dim = 8;
    cfg.hyperparams.epochs = 40;
    cfg.split.repetitions = 1;
    cfg.models = Some(vec![ModelKind::Cd, ModelKind::Bper]);
    let rows = run_pipeline(Pipeline::Compare, &cfg).unwrap();
    let cd = common::mean_of(&rows, "cd", "", "ndcg").unwrap();
    let bper = common::mean_of(&rows, "bper", "", "ndcg").unwrap();
    assert!(bper > 5.0 * cd, "bper {bper} cd {cd}");
}
