use std::path::Path;
use std::process::{Command, Output};

fn avsad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avsad")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = avsad(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn train_eval_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["gen-data", "--out", p(&corpus), "--speakers", "8", "--utts", "1", "--seed", "3"]);
    let manifest = corpus.join("manifest.jsonl");
    let config = dir.path().join("train.json");
    std::fs::write(&config, r#"{"max_epochs": 1, "patience": 1}"#).unwrap();
    let model = dir.path().join("brnn.avsd");
    let out = ok(&[
        "train", "--manifest", p(&manifest), "--model", "brnn", "--config", p(&config), "--out", p(&model),
    ]);
    assert!(out.contains("1 epochs"), "{out}");

    let (r1, r2) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for r in [&r1, &r2] {
        ok(&["eval", "--manifest", p(&manifest), "--model", p(&model), "--condition", "practical-noisy", "--report", p(r)]);
    }
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());

    let cmp = ok(&["compare", "--report-a", p(&r1), "--report-b", p(&r1)]);
    let v: serde_json::Value = serde_json::from_str(&cmp).unwrap();
    assert_eq!(v["p"], 0.5);
    assert_eq!(v["significant"], false);

    // A unimodal model needs the trained BRNN.
    let o = avsad(&["train", "--manifest", p(&manifest), "--model", "video-only", "--out", p(&dir.path().join("v.avsd"))]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: sequencing error:"), "{err}");

    let feats = dir.path().join("feats");
    let out = ok(&["extract", "--manifest", p(&manifest), "--features", "sadjadi", "--out", p(&feats)]);
    assert!(out.contains(" sadjadi files, "), "{out}");
    let any = std::fs::read_dir(&feats).unwrap().next().unwrap().unwrap().path();
    let (dim, values) = avsad_cli::commands::read_feature_file(&any).unwrap();
    assert_eq!(dim, 5);
    assert!(!values.is_empty());
}

#[test]
fn usage_errors_are_reported() {
    let o = avsad(&["eval", "--no-such-flag"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = avsad(&["eval", "--manifest", "/nonexistent/m.jsonl", "--model", "x", "--condition", "ideal-clean", "--report", "r"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: i/o error"));
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck"]);
    assert_eq!(out.lines().count(), 5, "{out}");
}
