use std::path::Path;
use std::process::{Command, Output};

fn bper(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bper")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn failure_line(out: &Output) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    err
}

const SMALL: [&str; 8] = [
    "--synth-users",
    "60",
    "--synth-items",
    "40",
    "--synth-explanations",
    "50",
    "--synth-records-per-user",
    "8",
];

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_split_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("synth");
    let data = dir.path().join("data");
    let ckpt = dir.path().join("bper.ckpt");
    let mut args = vec!["synth", "--out", p(&synth)];
    args.extend(SMALL);
    ok(&bper(&args));
    for f in ["triples.tsv", "truth.ckpt", "embeddings.bin", "explanations.map"] {
        assert!(synth.join(f).exists(), "{f}");
    }
    ok(&bper(&["split", "--input", p(&synth.join("triples.tsv")), "--out", p(&data)]));
    for f in ["train.tsv", "valid.tsv", "test.tsv", "users.map"] {
        assert!(data.join(f).exists(), "{f}");
    }
    ok(&bper(&[
        "train", "--data", p(&data), "--model", "bper", "--out", p(&ckpt), "--dim", "4", "--epochs", "3",
    ]));
    let table = ok(&bper(&["eval", "--data", p(&data), "--checkpoint", p(&ckpt)]));
    let metrics: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(metrics, ["ndcg", "precision", "recall", "f1", "units", "hit"]);

    let joint = ok(&bper(&["eval", "--data", p(&data), "--checkpoint", p(&ckpt), "--joint"]));
    assert!(joint.contains("rec_f1,") && joint.contains("exp_f1,"));

    let plus = dir.path().join("plus.ckpt");
    ok(&bper(&[
        "train",
        "--data",
        p(&data),
        "--model",
        "bper+",
        "--out",
        p(&plus),
        "--dim",
        "4",
        "--epochs",
        "2",
        "--embeddings",
        p(&synth.join("embeddings.bin")),
        "--embedding-map",
        p(&synth.join("explanations.map")),
    ]));
    ok(&bper(&["eval", "--data", p(&data), "--checkpoint", p(&plus)]));
}

#[test]
fn experiment_commands_write_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.config");
    std::fs::write(&config, "# tiny run\nmodels = rand, bper\ndim = 4\nepochs = 50\nrepetitions = 2\n").unwrap();
    let out = dir.path().join("results");
    let mut args = vec!["compare", "--config", p(&config), "--epochs", "3", "--output", p(&out)];
    args.extend(SMALL);
    let printed = ok(&bper(&args));
    assert!(printed.trim().ends_with("compare.csv"));
    let csv = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(csv.starts_with("dataset,model,repetition,hyperparams,metric,value\n"));
    assert!(csv.contains("T=3"), "flag must override the file value");
    assert_eq!(csv.lines().filter(|l| l.contains(",mean,") && l.contains(",f1,")).count(), 2);

    for cmd in ["sweep-mu", "sweep-alpha", "sparsity"] {
        let mut args = vec![cmd, "--dim", "4", "--epochs", "2", "--repetitions", "1", "--output", p(&out)];
        args.extend(SMALL);
        args.extend(["--alpha-values", "0,1", "--mu-values", "0,0.5,1", "--sparsity-ratios", "0.3,0.7"]);
        if cmd == "sparsity" {
            args.extend(["--models", "pitf,bper"]);
        }
        ok(&bper(&args));
    }
    let files = ok(&bper(&["report", "--dir", p(&out)]));
    for f in ["summary.tsv", "mu_curve.dat", "alpha_curve.dat", "sparsity_curve.dat"] {
        assert!(files.contains(f), "{f}");
    }
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    failure_line(&bper(&["eval", "--data", p(&missing), "--checkpoint", "x.ckpt"]));
    failure_line(&bper(&["compare", "--models", "nope"]));
    failure_line(&bper(&["compare", "--dim", "0"]));
    failure_line(&bper(&["train", "--bogus"]));
    let bad = dir.path().join("bad.config");
    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    failure_line(&bper(&["compare", "--config", p(&bad)]));
    failure_line(&bper(&["report", "--dir", p(dir.path())]));
}
