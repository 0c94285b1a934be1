use std::path::Path;
use std::process::{Command, Output};

use tap_core::trajectory::Corpus;

fn tap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tap")).current_dir(dir).args(args).output().expect("run tap")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(o.stderr.trim_ascii()).expect("error JSON on stderr")
}

fn assert_ok(o: &Output) {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

/// synth, ingest, optimize, label, search, unique, stats in one directory.
fn workflow(dir: &Path) -> Vec<(String, Output)> {
    let steps: [(&str, &[&str]); 7] = [
        ("synth", &["synth", "--n", "40", "--seed", "7", "--out", "corpus.jsonl", "--truth", "truth.jsonl", "--set", "synth.unique=3", "--jobs", "3"]),
        ("ingest", &["ingest", "corpus.jsonl", "--format", "jsonl", "--out", "corpus.bin"]),
        (
            "optimize",
            &["optimize", "corpus.bin", "--out", "thresholds.cfg", "--trace", "trace.csv", "--plot", "plots", "--set", "optimizer.max_epochs=80"],
        ),
        ("label", &["label", "corpus.bin", "--thresholds", "thresholds.cfg", "--level", "action", "--out", "labels.jsonl", "--jobs", "4"]),
        ("search", &["search", "labels.jsonl", "--ref", "scene-00000:0", "--dsim", "4", "--level", "maneuver"]),
        ("unique", &["unique", "truth.jsonl", "--level", "action"]),
        ("stats", &["stats", "labels.jsonl"]),
    ];
    steps
        .iter()
        .map(|(name, args)| {
            let o = tap(dir, args);
            assert_ok(&o);
            (name.to_string(), o)
        })
        .collect()
}

const ARTIFACTS: [&str; 9] =
    ["corpus.jsonl", "truth.jsonl", "corpus.bin", "thresholds.cfg", "trace.csv", "plots/omega.svg", "plots/a.svg", "plots/v.svg", "labels.jsonl"];

#[test]
fn happy_path_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = workflow(a.path());
    let out_b = workflow(b.path());
    for f in ARTIFACTS {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f} is empty");
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    for ((name, x), (_, y)) in out_a.iter().zip(&out_b) {
        if name != "synth" && name != "ingest" && name != "label" {
            assert_eq!(x.stdout, y.stdout, "{name} output differs");
        }
    }
    let unique = String::from_utf8(out_a[5].1.stdout.clone()).unwrap();
    assert!(unique.ends_with("count: 3 of 40 records\n"), "{unique}");
    let svg = std::fs::read_to_string(a.path().join("plots/v.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn label_requires_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let o = tap(dir.path(), &["label", "corpus.bin"]);
    assert_eq!(code(&o), 1);
    let err = stderr_json(&o);
    assert!(err["message"].as_str().unwrap().contains("--thresholds"), "{err}");
}

#[test]
fn optimize_on_empty_corpus_fails() {
    let dir = tempfile::tempdir().unwrap();
    let empty = Corpus::new(Vec::new(), "empty").unwrap();
    std::fs::write(dir.path().join("empty.bin"), empty.to_bytes()).unwrap();
    let o = tap(dir.path(), &["optimize", "empty.bin"]);
    assert_eq!(code(&o), 1);
    assert_eq!(stderr_json(&o)["error"], "EmptyDistribution");
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tap(dir.path(), &["ingest", "nope.jsonl", "--out", "c.bin"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"], "Io");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[optimizer]\nmax_epoch = 3\n").unwrap();
    assert_ok(&tap(dir.path(), &["synth", "--n", "4", "--out", "c.bin"]));
    let o = tap(dir.path(), &["optimize", "c.bin", "--config", "run.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("optimizer.max_epoch"));
}

#[test]
fn stats_and_search_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&tap(dir.path(), &["synth", "--n", "30", "--seed", "3", "--out", "c.bin", "--truth", "t.jsonl", "--set", "synth.unique=2"]));
    let before = std::fs::read(dir.path().join("t.jsonl")).unwrap();

    let o = tap(dir.path(), &["stats", "t.jsonl", "--json"]);
    assert_ok(&o);
    let st: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let total: u64 = st["signatures"].as_array().unwrap().iter().map(|p| p[1].as_u64().unwrap()).sum();
    assert_eq!(total, 30);
    assert_eq!(st["unique"], 2);

    let unique = tap(dir.path(), &["unique", "t.jsonl"]);
    let first = String::from_utf8(unique.stdout).unwrap().lines().next().unwrap().to_string();
    let o = tap(dir.path(), &["search", "t.jsonl", "--ref", &first]);
    assert_ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("0 matches") && text.contains("unique"), "{text}");

    let o = tap(dir.path(), &["search", "t.jsonl", "--ref", &first, "--dsim", "100", "--json"]);
    assert_ok(&o);
    let hits: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(hits.as_array().unwrap().len(), 29);
    assert_eq!(std::fs::read(dir.path().join("t.jsonl")).unwrap(), before);
}
