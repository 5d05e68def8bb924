use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sleepstage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sleepstage"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sleepstage(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn closed_loop_train_evaluate_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (features, windowed, manifest, model) = (
        d.join("features.csv"),
        d.join("windowed.csv"),
        d.join("split.txt"),
        d.join("model.json"),
    );
    ok(&[
        "synth",
        "--per-class",
        "80",
        "--seed",
        "3",
        "-o",
        p(&features),
    ]);
    let echoed = fs::read_to_string(d.join("features.csv.spec.json")).unwrap();
    assert!(echoed.contains("\"seed\": 3"), "{echoed}");
    ok(&["window", "-i", p(&features), "-o", p(&windowed)]);
    ok(&[
        "split",
        "-i",
        p(&windowed),
        "--validation-fraction",
        "0.2",
        "-o",
        p(&manifest),
    ]);
    ok(&[
        "train",
        "-i",
        p(&windowed),
        "--split",
        p(&manifest),
        "--model",
        p(&model),
        "--classifier",
        "mlp",
        "--epochs",
        "4",
        "--set",
        "hidden=16",
        "--history",
        p(&d.join("history.csv")),
    ]);
    let history = fs::read_to_string(d.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 5);

    let eval = ok(&[
        "evaluate",
        "--model",
        p(&model),
        "-i",
        p(&windowed),
        "--split",
        p(&manifest),
        "-o",
        p(&d.join("eval")),
    ]);
    let text = String::from_utf8(eval.stdout).unwrap();
    assert!(text.contains("rows = true class"));
    assert!(d.join("eval/confusion_matrix.csv").exists());

    let preds = d.join("predictions.csv");
    ok(&[
        "predict",
        "--model",
        p(&model),
        "-i",
        p(&windowed),
        "-o",
        p(&preds),
    ]);
    let rows = fs::read_to_string(&preds).unwrap();
    assert!(rows.starts_with("row,predicted,p_P,p_S,p_W,true\n"));
    assert_eq!(rows.lines().count(), 240 - 4 + 1);
}

#[test]
fn raw_signals_extract_to_features() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "synth",
        "--raw",
        "--per-class",
        "2",
        "--sample-rate-hz",
        "100",
        "-o",
        p(&d.join("raw")),
    ]);
    assert!(d.join("raw/synth_spec.json").exists());
    let features = d.join("features.csv");
    ok(&[
        "extract",
        "--signals",
        p(&d.join("raw/signals.csv")),
        "--epochs",
        p(&d.join("raw/epochs.csv")),
        "--sample-rate-hz",
        "100",
        "-o",
        p(&features),
    ]);
    let text = fs::read_to_string(&features).unwrap();
    assert!(text.starts_with("eeg_00_05,eeg_05_10,"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn balance_replicates_minority() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("w.csv");
    fs::write(&input, "f000,label\n1,P\n2,S\n3,S\n4,S\n5,W\n6,W\n7,W\n").unwrap();
    let out = ok(&[
        "balance",
        "-i",
        p(&input),
        "-o",
        p(&dir.path().join("b.csv")),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Total: 9"), "{stdout}");
}

#[test]
fn report_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "synthetic_per_class=60\nn_trees=5\n").unwrap();
    ok(&[
        "report",
        "--config",
        p(&conf),
        "-o",
        p(&out_dir),
        "--seed",
        "9",
    ]);
    for name in [
        "model.json",
        "split_manifest.txt",
        "confusion_matrix.csv",
        "metrics.txt",
        "metrics.csv",
        "predictions.csv",
    ] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    let manifest = fs::read_to_string(out_dir.join("split_manifest.txt")).unwrap();
    assert!(manifest.contains("seed=9\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(sleepstage(&["window"]).status.code(), Some(2));
    assert_eq!(
        sleepstage(&["report", "--classifier", "svm"]).status.code(),
        Some(2)
    );

    let bad = d.join("bad.csv");
    fs::write(&bad, "eeg_00_05,label\n1,P\n").unwrap();
    let out = sleepstage(&["window", "-i", p(&bad), "-o", p(&d.join("w.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing columns"));

    let windowed = d.join("w.csv");
    fs::write(&windowed, "f000,label\n1,P\n2,S\n3,W\n4,P\n").unwrap();
    let out = sleepstage(&[
        "train",
        "-i",
        p(&windowed),
        "--model",
        p(&d.join("m.json")),
        "--classifier",
        "logistic-regression",
        "--set",
        "learning_rate=1e308",
        "--balance",
        "off",
        "--test-fraction",
        "0",
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
