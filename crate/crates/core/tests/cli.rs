use affect::data_io::{generate_synthetic, load_corpus, save_corpus, Split};
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn affect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affect"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let out = affect(&[
        "synth",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--points",
        "12",
        "--frames",
        "4",
        "--out",
        s(&path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{"epochs": 3, "batch_size": 16, "spec": {"window": 4, "stream": [16, 8], "trunk": [8]}}"#,
    )
    .unwrap();
    path
}

fn write_predictions(path: &Path, rows: &[(String, f64, f64)]) {
    let mut text = String::from("utterance_id,arousal,valence\n");
    for (id, a, v) in rows {
        text.push_str(&format!("{id},{a},{v}\n"));
    }
    fs::write(path, text).unwrap();
}

fn val_labels(corpus: &Path) -> Vec<(String, f64, f64)> {
    load_corpus(corpus)
        .unwrap()
        .split(Split::Val)
        .iter()
        .map(|r| (r.id.clone(), r.arousal.unwrap(), r.valence.unwrap()))
        .collect()
}

#[test]
fn synth_writes_n_lines_with_stable_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.jsonl", 100, 7);
    let b = synth(dir.path(), "b.jsonl", 100, 7);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 100);
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let run = read_json(&dir.path().join("a.jsonl.run.json"));
    assert_eq!(run["seed"], 7);
    assert_eq!(run["sha256"], read_json(&dir.path().join("b.jsonl.run.json"))["sha256"]);
}

#[test]
fn argument_errors_exit_2() {
    let out = affect(&["synth", "--n", "10"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&affect(&["train", "--model", "cnn", "--corpus", "x", "--out", "y"])), 2);
    assert_eq!(code(&affect(&["frobnicate"])), 2);
    assert_eq!(code(&affect(&["--help"])), 0);
}

#[test]
fn text_seq_without_embeddings_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", 20, 1);
    let out = affect(&["train", "--model", "text-seq", "--corpus", s(&corpus), "--out", s(&dir.path().join("m"))]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn text_model_on_corpus_without_transcripts_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpus = generate_synthetic(20, 2, 12, 4);
    corpus.records.iter_mut().for_each(|r| r.transcript = None);
    let path = dir.path().join("silent.jsonl");
    save_corpus(&corpus, &path).unwrap();
    let out = affect(&["train", "--model", "text-feat", "--corpus", s(&path), "--out", s(&dir.path().join("m"))]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = affect(&[
        "train",
        "--model",
        "landmarks",
        "--corpus",
        s(&dir.path().join("nope.jsonl")),
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn train_writes_checkpoints_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", 60, 3);
    let out_dir = dir.path().join("m");
    let out = affect(&[
        "train",
        "--model",
        "landmarks",
        "--corpus",
        s(&corpus),
        "--config",
        s(&small_config(dir.path())),
        "--seed",
        "11",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["model.json", "best_arousal.json", "best_valence.json", "validation.json"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    let run = read_json(&out_dir.join("run_config.json"));
    assert_eq!(run["seed"], 11);
    assert_eq!(run["train"]["epochs"], 3);
    assert_eq!(run["spec"]["stream"], serde_json::json!([16, 8]));

    let log = fs::read_to_string(out_dir.join("train_log.csv")).unwrap();
    let mut lines = log.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (ba, bv) = (col("best_ccc_arousal"), col("best_ccc_valence"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for pair in rows.windows(2) {
        assert!(pair[1][ba] >= pair[0][ba] && pair[1][bv] >= pair[0][bv]);
    }

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"epochs": 1, "momentum": 0.9}"#).unwrap();
    let out = affect(&[
        "train",
        "--model",
        "landmarks",
        "--corpus",
        s(&corpus),
        "--config",
        s(&bad),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn evaluate_perfect_and_constant_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", 60, 4);
    let labels = val_labels(&corpus);

    let perfect = dir.path().join("perfect.csv");
    write_predictions(&perfect, &labels);
    let out_dir = dir.path().join("perfect");
    let out = affect(&["evaluate", "--corpus", s(&corpus), "--predictions", s(&perfect), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&out_dir.join("metrics.json"));
    assert_eq!(m["arousal"]["ccc"], 1.0);
    assert_eq!(m["valence"]["ccc"], 1.0);
    assert_eq!(m["arousal"]["mse"], 0.0);
    assert_eq!(m["valence"]["mse"], 0.0);
    assert_eq!(m["n"], labels.len());
    assert!(String::from_utf8_lossy(&out.stdout).contains("arousal"));

    let constant = dir.path().join("constant.csv");
    let flat: Vec<(String, f64, f64)> = labels.iter().map(|(id, _, _)| (id.clone(), 0.5, 0.0)).collect();
    write_predictions(&constant, &flat);
    let out_dir = dir.path().join("constant");
    let out = affect(&["evaluate", "--corpus", s(&corpus), "--predictions", s(&constant), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0);
    let m = read_json(&out_dir.join("metrics.json"));
    assert_eq!(m["arousal"]["ccc"], 0.0);
    assert_eq!(m["valence"]["ccc"], 0.0);
    assert!(m["arousal"]["mse"].as_f64().unwrap() > 0.0);
}

#[test]
fn evaluate_uncovered_split_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", 60, 5);
    let labels = val_labels(&corpus);
    let partial = dir.path().join("partial.csv");
    write_predictions(&partial, &labels[1..]);
    let out = affect(&[
        "evaluate",
        "--corpus",
        s(&corpus),
        "--predictions",
        s(&partial),
        "--out",
        s(&dir.path().join("e")),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn fuse_single_input_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", 40, 6);
    let labels = val_labels(&corpus);
    let noisy: Vec<(String, f64, f64)> = labels
        .iter()
        .enumerate()
        .map(|(i, (id, a, v))| (id.clone(), (a * 0.9 + 0.01 * i as f64).min(1.0), v * 0.8))
        .collect();
    let input = dir.path().join("lm.csv");
    write_predictions(&input, &noisy);
    let cccs = dir.path().join("cccs.json");
    fs::write(&cccs, r#"{"lm": {"arousal": 0.4, "valence": 0.3}}"#).unwrap();
    let fused = dir.path().join("fused.csv");
    let out = affect(&["fuse", "--predictions", s(&input), "--cccs", s(&cccs), "--out", s(&fused)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let parse = |p: &Path| -> Vec<Vec<f64>> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    assert_eq!(parse(&fused), parse(&input));
    let audit = read_json(&dir.path().join("fused.csv.fusion.json"));
    assert_eq!(audit["arousal"][0]["model"], "lm");
    assert_eq!(audit["arousal"][0]["weight"], 1.0);
    assert_eq!(audit["valence"][0]["ccc"], 0.3);
}

#[test]
fn fuse_two_inputs_and_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", 40, 6);
    let labels = val_labels(&corpus);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_predictions(&a, &labels[..labels.len() - 1]);
    write_predictions(&b, &labels[1..]);
    let cccs = dir.path().join("cccs.json");
    fs::write(&cccs, r#"{"x": {"arousal": 0.3, "valence": 0.5}, "y": {"arousal": 0.1, "valence": -0.2}}"#).unwrap();
    let fused = dir.path().join("fused.csv");
    let pa = format!("x={}", s(&a));
    let pb = format!("y={}", s(&b));
    let args = ["fuse", "--predictions", &pa, "--predictions", &pb, "--cccs", s(&cccs), "--out", s(&fused)];
    assert_eq!(code(&affect(&args)), 0);
    assert_eq!(fs::read_to_string(&fused).unwrap().lines().count(), labels.len() + 1);
    let audit = read_json(&dir.path().join("fused.csv.fusion.json"));
    assert_eq!(audit["valence"][1]["weight"], 0.0);
    assert!((audit["arousal"][0]["weight"].as_f64().unwrap() - 0.75).abs() < 1e-15);

    // only the first file: the last utterance of the split is uncovered
    let out = affect(&[
        "fuse",
        "--predictions",
        &pa,
        "--cccs",
        s(&cccs),
        "--corpus",
        s(&corpus),
        "--split",
        "val",
        "--out",
        s(&fused),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn extract_features_dumps_descriptors() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "c.jsonl", 10, 8);
    let out_path = dir.path().join("desc.jsonl");
    let out = affect(&["extract-features", "--corpus", s(&corpus), "--window", "3", "--out", s(&out_path)]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), 10);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["width"], 120);
    assert_eq!(first["descriptor"].as_array().unwrap().len(), 360);
}
