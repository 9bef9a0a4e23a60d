use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn slotfill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slotfill"))
        .args(args)
        .env_remove("SLOTFILL_OUT_DIR")
        .output()
        .expect("run slotfill")
}

fn ok(args: &[&str]) -> String {
    let out = slotfill(args);
    assert!(
        out.status.success(),
        "`slotfill {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn err(args: &[&str]) -> String {
    let out = slotfill(args);
    assert!(!out.status.success(), "`slotfill {}` unexpectedly succeeded", args.join(" "));
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, seed: u64) -> PathBuf {
    let data = dir.join(format!("synth{seed}"));
    ok(&[
        "synth", "--train-size", "40", "--dev-size", "10", "--test-size", "10", "--seed", &seed.to_string(),
        "--out-dir", s(&data),
    ]);
    data
}

const SMALL: &[&str] = &["--embed-dim", "8", "--set", "gru_units=6", "--set", "batch_size=8", "--epochs", "3"];

fn train(data: &Path, out: &Path, mode: &str, extra: &[&str]) -> String {
    let mut args = vec!["train", "--data", s(data), "--mode", mode, "--out-dir", s(out)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn synth_is_seed_determined_and_bio_valid() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), 3);
    let b = dir.path().join("again");
    ok(&["synth", "--train-size", "40", "--dev-size", "10", "--test-size", "10", "--seed", "3", "--out-dir", s(&b)]);
    for f in ["train.conll", "dev.conll", "test.conll"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let c = synth(dir.path(), 4);
    assert_ne!(fs::read(a.join("train.conll")).unwrap(), fs::read(c.join("train.conll")).unwrap());
    let out = ok(&["synth", "--labels", "11", "--out-dir", s(&dir.path().join("eleven"))]);
    let rec: Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(rec["labels"].as_array().unwrap().len(), 11);
}

#[test]
fn training_is_reproducible_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1);
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    train(&data, &r1, "le-window", &[]);
    train(&data, &r2, "le-window", &[]);
    for f in ["model.ckpt", "epochs.jsonl", "config.txt", "words.tsv", "labels.tsv", "cooc.tsv"] {
        assert_eq!(
            fs::read(r1.join("seed-1").join(f)).unwrap(),
            fs::read(r2.join("seed-1").join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
    let m = json(&r1.join("seed-1/manifest.json"));
    assert_eq!(m["config"]["mode"], "le-window");
    assert_eq!(m["config"]["embed_dim"], 8);
    assert_eq!(m["epochs"].as_array().unwrap().len(), 3);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(m["parameters"]["delta"].as_i64().unwrap() > 0);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn several_seeds_report_mean_and_stddev() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1);
    let out = dir.path().join("multi");
    let stdout = train(&data, &out, "bl", &["--seed", "1,2"]);
    assert!(out.join("seed-1/model.ckpt").exists() && out.join("seed-2/model.ckpt").exists());
    let summary = json(&out.join("summary.json"));
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    let f: Vec<f64> = runs.iter().map(|r| r["test_f1"].as_f64().unwrap()).collect();
    let mean = (f[0] + f[1]) / 2.0;
    let sd = ((f[0] - mean).powi(2) + (f[1] - mean).powi(2)).sqrt();
    assert!((summary["test_f1"]["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((summary["test_f1"]["stddev"].as_f64().unwrap() - sd).abs() < 1e-12);
    assert!(stdout.contains("\"record\":\"summary\""));
}

#[test]
fn eval_predict_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1);
    let (bl, le) = (dir.path().join("bl"), dir.path().join("le"));
    train(&data, &bl, "bl", &[]);
    train(&data, &le, "le-plain", &[]);
    let test = data.join("test.conll");

    let out = dir.path().join("eval");
    let text = ok(&[
        "eval", "--model", s(&bl.join("seed-1")), "--model", s(&le.join("seed-1")), "--test", s(&test), "--out-dir",
        s(&out),
    ]);
    assert!(text.contains("shared+unique"));
    let report = fs::read_to_string(out.join("report.jsonl")).unwrap();
    let recs: Vec<Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.iter().filter(|r| r["record"] == "eval").count(), 2);
    assert_eq!(recs.iter().filter(|r| r["record"] == "compare").count(), 2);
    assert_eq!(recs.iter().filter(|r| r["record"] == "profiles").count(), 1);

    // Scoring a model's own predictions as gold gives a perfect score.
    let preds = dir.path().join("tagged.conll");
    let unlabeled = dir.path().join("words.conll");
    let words: String = fs::read_to_string(&test)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string() + "\n")
        .collect();
    fs::write(&unlabeled, words).unwrap();
    ok(&["predict", "--model", s(&bl.join("seed-1")), "--input", s(&unlabeled), "--output", s(&preds)]);
    let self_out = dir.path().join("self");
    ok(&["eval", "--model", s(&bl.join("seed-1")), "--test", s(&preds), "--out-dir", s(&self_out)]);
    let self_report = fs::read_to_string(self_out.join("report.jsonl")).unwrap();
    let rec: Value = serde_json::from_str(self_report.lines().next().unwrap()).unwrap();
    assert_eq!(rec["report"]["scores"]["f1"], 1.0);

    // Labeled input produces a three-column file that eval accepts directly.
    let three = dir.path().join("three.tsv");
    ok(&["predict", "--model", s(&bl.join("seed-1")), "--input", s(&test), "--output", s(&three)]);
    assert!(fs::read_to_string(&three).unwrap().lines().next().unwrap().split('\t').count() == 3);
    ok(&["eval", "--predictions", s(&three), "--out-dir", s(&dir.path().join("three"))]);
}

fn utterances(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .split("\n\n")
        .map(str::trim)
        .filter(|u| !u.is_empty())
        .map(String::from)
        .collect()
}

#[test]
fn reduce_with_huge_cap_saturates() {
    let dir = tempfile::tempdir().unwrap();
    // Every utterance shares the most frequent word, so it alone covers all of them.
    let data = dir.path().join("shared");
    fs::create_dir_all(&data).unwrap();
    fs::write(data.join("train.conll"), "go\tO\nnorth\tB-dir\n\ngo\tO\n\ngo\tO\nwest\tB-dir\n").unwrap();
    fs::write(data.join("dev.conll"), "go\tO\nhome\tB-dest\n").unwrap();
    let out = dir.path().join("red");
    ok(&["reduce", "--data", s(&data), "--m-cap", "1000000000", "--out-dir", s(&out)]);
    for f in ["train.conll", "dev.conll"] {
        assert_eq!(utterances(&data.join(f)), utterances(&out.join("m1000000000").join(f)));
    }

    // In general the result is an order-preserving subset with full coverage.
    let data = synth(dir.path(), 2);
    let out = dir.path().join("red2");
    let rec: Value = serde_json::from_str(ok(&["reduce", "--data", s(&data), "--m-cap", "1000000000", "--out-dir", s(&out)]).trim()).unwrap();
    assert_eq!(rec["words_covered"], rec["words_total"]);
    for f in ["train.conll", "dev.conll"] {
        let full = utterances(&data.join(f));
        let mut rest = full.iter();
        for u in utterances(&out.join("m1000000000").join(f)) {
            assert!(rest.any(|v| *v == u), "reduced {f} is not an ordered subset");
        }
    }
    assert_eq!(fs::read(data.join("test.conll")).unwrap(), fs::read(out.join("m1000000000/test.conll")).unwrap());
}

#[test]
fn output_directory_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_slotfill"))
        .args(["synth", "--train-size", "5", "--dev-size", "2", "--test-size", "2"])
        .env("SLOTFILL_OUT_DIR", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("train.conll").exists());
}

#[test]
fn errors_exit_non_zero_with_locations() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1);

    assert!(err(&["train", "--out-dir", s(dir.path())]).contains("no training data"));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "lr = 0.01\nwindow = four\n").unwrap();
    let msg = err(&["train", "--data", s(&data), "--config", s(&cfg)]);
    assert!(msg.contains("bad.cfg:2:10"), "{msg}");

    let broken = dir.path().join("broken.conll");
    fs::write(&broken, "a\tO\nb\tI-\n").unwrap();
    let msg = err(&["train", "--train", s(&broken), "--dev", s(&data.join("dev.conll"))]);
    assert!(msg.contains("broken.conll:2:3"), "{msg}");

    let msg = err(&["gradcheck", "--mode", "bl", "--corrupt", "fc.weight"]);
    assert!(msg.contains("fc.weight"), "{msg}");

    let model = dir.path().join("m");
    train(&data, &model, "bl", &[]);
    let words = model.join("seed-1/words.tsv");
    let text = fs::read_to_string(&words).unwrap();
    let truncated: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    fs::write(&words, truncated).unwrap();
    let msg = err(&["eval", "--model", s(&model.join("seed-1")), "--test", s(&data.join("test.conll"))]);
    assert!(msg.contains("words.tsv"), "{msg}");

    // A checkpoint from a different vocabulary is rejected.
    let other = dir.path().join("other");
    train(&synth(dir.path(), 5), &other, "bl", &[]);
    fs::copy(other.join("seed-1/model.ckpt"), model.join("seed-1/model.ckpt")).unwrap();
    fs::write(&words, text).unwrap();
    let msg = err(&["eval", "--model", s(&model.join("seed-1")), "--test", s(&data.join("test.conll"))]);
    assert!(msg.contains("does not match"), "{msg}");

    assert!(err(&["eval"]).contains("nothing to evaluate"));
}

#[test]
fn params_reports_counts() {
    let out = ok(&["params", "--mode", "le-plain", "--words", "100", "--labels", "9", "--embed-dim", "16", "--gru-units", "4"]);
    let rec: Value = serde_json::from_str(out.trim()).unwrap();
    let p = &rec["parameters"];
    assert_eq!(p["counts"]["label_scaling"], 109);
    assert_eq!(p["delta"], p["counts"]["total"].as_i64().unwrap() - p["baseline_total"].as_i64().unwrap());
}
