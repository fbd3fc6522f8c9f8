use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn paat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paat"))
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = paat(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small corpus: 60 documents of 120 tokens.
fn small_data(root: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let dir = root.join(name);
    let mut args = vec!["gen-data", "--out", s(&dir), "--num-docs", "60", "--doc-len", "120", "--seed", "3"];
    args.extend_from_slice(extra);
    ok(&args);
    dir
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--data", s(data), "--out", s(out)];
    if !extra.contains(&"--epochs") {
        args.extend(["--epochs", "2"]);
    }
    args.extend_from_slice(extra);
    ok(&args);
    out.join("model.ckpt")
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn gen_data_is_deterministic_and_audited() {
    let tmp = TempDir::new().unwrap();
    let a = small_data(tmp.path(), "a", &[]);
    let b = small_data(tmp.path(), "b", &[]);
    for f in ["train.tsv", "valid.tsv", "test.tsv", "vocab.txt", "audit.txt"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    assert!(read(&a.join("audit.txt")).contains("audit=pass"));
    let lines: Vec<usize> = ["train.tsv", "valid.tsv", "test.tsv"].iter().map(|f| read(&a.join(f)).lines().count()).collect();
    assert_eq!(lines, vec![44, 6, 10]);

    let c = small_data(tmp.path(), "c", &["--preset", "concentrated"]);
    assert!(read(&c.join("audit.txt")).contains("dispersion=1\t"));
}

#[test]
fn infeasible_spec_exits_nonzero() {
    let tmp = TempDir::new().unwrap();
    let out = paat(&["gen-data", "--out", s(&tmp.path().join("x")), "--doc-len", "10", "--signature-per-label", "50"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_setting_exits_nonzero() {
    let tmp = TempDir::new().unwrap();
    let out = paat(&["gen-data", "--out", s(&tmp.path().join("x")), "--set", "bogus=1"]);
    assert!(!out.status.success());
}

#[test]
fn pea_matches_single_partition_paat() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path(), "d", &[]);
    train(&data, &tmp.path().join("pea"), &["--variant", "paat-pea"]);
    train(&data, &tmp.path().join("one"), &["--variant", "paat", "--n-enc", "1", "--n-att", "1"]);
    let a = read(&tmp.path().join("pea/epochs.tsv"));
    assert_eq!(a, read(&tmp.path().join("one/epochs.tsv")));
    assert!(a.starts_with("epoch\ttrain_bce\tvalid_micro_f1\n"));
    assert!(read(&tmp.path().join("pea/config.txt")).contains("variant=paat-pea"));
}

#[test]
fn zero_learning_rate_keeps_validation_constant() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path(), "d", &[]);
    train(&data, &tmp.path().join("r"), &["--lr", "0", "--epochs", "3", "--patience", "5"]);
    let log = read(&tmp.path().join("r/epochs.tsv"));
    let f1: Vec<&str> = log.lines().skip(1).map(|l| l.split('\t').nth(2).unwrap()).collect();
    assert_eq!(f1.len(), 3);
    assert!(f1.iter().all(|v| *v == f1[0]));
}

#[test]
fn eval_is_repeatable_and_self_compare_has_no_disagreement() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path(), "d", &[]);
    let ckpt = train(&data, &tmp.path().join("m"), &[]);
    let test = data.join("test.tsv");
    let (r1, r2, r3) = (tmp.path().join("r1.json"), tmp.path().join("r2.json"), tmp.path().join("r3.json"));
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&test), "--out", s(&r1)]);
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&test), "--out", s(&r2)]);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    let report: Value = serde_json::from_str(&read(&r1)).unwrap();
    for key in ["macro_auc", "micro_auc", "macro_f1", "micro_f1", "p_at_k", "excluded_labels"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!(report["p_at_k"].get("5").is_some() && report["p_at_k"].get("8").is_some());
    assert!(report.get("disagreement").is_none());

    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&test), "--out", s(&r3), "--compare", s(&ckpt), "--k", "1,3"]);
    let report: Value = serde_json::from_str(&read(&r3)).unwrap();
    assert_eq!(report["disagreement"]["cells"], 0);
    assert!(report["p_at_k"].get("3").is_some());
}

#[test]
fn memorized_training_set_scores_high() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path(), "d", &[]);
    // Validate on the training set so the kept epoch is the best memorizer.
    fs::copy(data.join("train.tsv"), data.join("valid.tsv")).unwrap();
    let ckpt = train(&data, &tmp.path().join("m"), &["--epochs", "30", "--patience", "30"]);
    let r = tmp.path().join("train.json");
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data.join("train.tsv")), "--out", s(&r)]);
    let report: Value = serde_json::from_str(&read(&r)).unwrap();
    assert!(report["micro_f1"].as_f64().unwrap() >= 0.95, "{}", report["micro_f1"]);
}

#[test]
fn eval_rejects_a_mismatched_vocabulary() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path(), "d", &[]);
    let other = small_data(tmp.path(), "o", &["--set", "vocab_size=500"]);
    let ckpt = train(&data, &tmp.path().join("m"), &["--epochs", "1"]);
    let out = paat(&["eval", "--checkpoint", s(&ckpt), "--data", s(&other.join("test.tsv")), "--out", s(&tmp.path().join("r.json"))]);
    assert!(!out.status.success());
}

fn first_doc_id(path: &Path) -> String {
    read(path).lines().next().unwrap().split('\t').next().unwrap().to_string()
}

#[test]
fn explain_writes_json_and_text() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path(), "d", &[]);
    let ckpt = train(&data, &tmp.path().join("m"), &["--epochs", "1"]);
    let test = data.join("test.tsv");
    let id = first_doc_id(&test);
    let out = tmp.path().join("map.json");
    ok(&["explain", "--checkpoint", s(&ckpt), "--data", s(&test), "--doc", &id, "--labels", "C00,C03", "--out", s(&out)]);
    let map: Value = serde_json::from_str(&read(&out)).unwrap();
    let labels = map["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 2);
    assert_eq!(labels[0]["conventional"].as_array().unwrap().len(), 120);
    assert_eq!(labels[0]["segment_weights"].as_array().unwrap().len(), 6);
    let text = read(&out.with_extension("txt"));
    assert!(text.contains("C03") && text.contains("conventional") && text.contains("partition"));

    let bad = paat(&["explain", "--checkpoint", s(&ckpt), "--data", s(&test), "--doc", "nope", "--out", s(&out)]);
    assert!(!bad.status.success());
    let bad = paat(&["explain", "--checkpoint", s(&ckpt), "--data", s(&test), "--doc", &id, "--labels", "C99", "--out", s(&out)]);
    assert!(!bad.status.success());
}

#[test]
fn single_partition_map_equals_conventional_map() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path(), "d", &[]);
    let ckpt = train(&data, &tmp.path().join("m"), &["--epochs", "1", "--n-enc", "1", "--n-att", "1"]);
    let test = data.join("test.tsv");
    let out = tmp.path().join("map.json");
    ok(&["explain", "--checkpoint", s(&ckpt), "--data", s(&test), "--doc", &first_doc_id(&test), "--labels", "C01", "--out", s(&out)]);
    let map: Value = serde_json::from_str(&read(&out)).unwrap();
    let l = &map["labels"][0];
    assert_eq!(l["conventional"], l["partition"]);
}

#[test]
fn ablate_builds_one_row_per_cell() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path(), "d", &[]);
    let out = tmp.path().join("ab");
    ok(&[
        "ablate", "--data", s(&data), "--out", s(&out), "--variants", "paat,paat-pea", "--partitions", "1,2",
        "--seeds", "2", "--epochs", "1",
    ]);
    let table = read(&out.join("table.tsv"));
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("cell\truns\tmicro_f1"));
    let names: Vec<&str> = rows[1..].iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(names, vec!["paat", "paat-pea", "paat n_att=1", "paat n_att=2"]);
    assert!(rows[1..].iter().all(|r| r.split('\t').nth(1) == Some("2") && r.contains('±')));
    let runs = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".json")).count();
    assert_eq!(runs, 8);
}
