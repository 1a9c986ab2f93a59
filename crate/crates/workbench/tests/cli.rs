use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polyprobe::store::load_records;
use serde_json::Value;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn polyprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyprobe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn convert_curated(out: &Path) {
    let run = polyprobe(&["convert", "--input", s(&fixture("curated")), "--output", s(out)]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
}

#[test]
fn convert_writes_tasks_and_one_manifest_per_language() {
    let dir = tempfile::tempdir().unwrap();
    convert_curated(dir.path());
    let files = sorted_files(dir.path());
    let manifests: Vec<&String> = files.iter().filter(|f| f.ends_with(".manifest.json")).collect();
    assert_eq!(manifests, ["de.manifest.json", "fi.manifest.json"]);
    assert!(files.contains(&"de_Tense.txt".to_string()));
    assert!(files.contains(&"run-convert.json".to_string()));

    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fi.manifest.json")).unwrap()).unwrap();
    let categories: Vec<&str> = manifest["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["category"].as_str().unwrap())
        .collect();
    assert_eq!(categories, ["Case", "Number"]);
}

#[test]
fn convert_is_byte_identical_across_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    convert_curated(a.path());
    convert_curated(b.path());
    let names = sorted_files(a.path());
    assert_eq!(names, sorted_files(b.path()));
    for name in names.iter().filter(|n| !n.starts_with("run-")) {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn convert_without_annotation_warns_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let run = polyprobe(&["convert", "--input", s(&fixture("unannotated")), "--output", s(dir.path())]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("no morphological annotation"), "{}", stderr(&run));
}

#[test]
fn convert_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let run = polyprobe(&["convert", "--input", s(&missing), "--output", s(dir.path())]);
    assert_eq!(run.status.code(), Some(2));

    let empty = tempfile::tempdir().unwrap();
    let run = polyprobe(&["convert", "--input", s(empty.path()), "--output", s(dir.path())]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("no .conllu files"));

    let run = polyprobe(&["convert", "--input", s(empty.path()), "--output", s(dir.path()), "--ratios", "0.5,0.5,0.5"]);
    assert_eq!(run.status.code(), Some(2));

    let run = polyprobe(&["frobnicate"]);
    assert_eq!(run.status.code(), Some(2));
}

fn probe_args<'a>(tasks: &'a [String], out: &'a Path, provider: &'a str) -> Vec<&'a str> {
    let mut args = vec!["probe", "--input"];
    args.extend(tasks.iter().map(String::as_str));
    args.extend([
        "--output",
        s(out),
        "--provider",
        provider,
        "--runs",
        "1",
        "--epochs",
        "2",
        "--aggregation",
        "avg",
    ]);
    args
}

#[test]
fn probe_appends_one_record_per_layer_and_skips_known_fingerprints() {
    let tasks = tempfile::tempdir().unwrap();
    convert_curated(tasks.path());
    let files: Vec<String> = ["de_Case.txt", "de_Tense.txt", "fi_Number.txt"]
        .iter()
        .map(|f| tasks.path().join(f).to_string_lossy().into_owned())
        .collect();
    let out = tempfile::tempdir().unwrap();
    let args = probe_args(&files, out.path(), "hash:16");

    let run = polyprobe(&args);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let records = load_records(out.path()).unwrap();
    assert!(records.malformed.is_empty());
    assert_eq!(records.records.len(), 12);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.path().join("run-probe.json")).unwrap()).unwrap();
    assert_eq!(manifest["fingerprints"].as_array().unwrap().len(), 3);

    let before = fs::read(out.path().join("records.jsonl")).unwrap();
    let again = polyprobe(&args);
    assert_eq!(again.status.code(), Some(0), "{}", stderr(&again));
    assert_eq!(fs::read(out.path().join("records.jsonl")).unwrap(), before);
}

#[test]
fn probe_accepts_glob_patterns() {
    let tasks = tempfile::tempdir().unwrap();
    convert_curated(tasks.path());
    let pattern = vec![tasks.path().join("fi_*.txt").to_string_lossy().into_owned()];
    let out = tempfile::tempdir().unwrap();
    let run = polyprobe(&probe_args(&pattern, out.path(), "hash:8"));
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    assert_eq!(load_records(out.path()).unwrap().records.len(), 8);
}

#[test]
fn unreachable_provider_is_a_configuration_error() {
    let tasks = tempfile::tempdir().unwrap();
    convert_curated(tasks.path());
    let files = vec![tasks.path().join("de_Tense.txt").to_string_lossy().into_owned()];
    let out = tempfile::tempdir().unwrap();
    let run = polyprobe(&probe_args(&files, out.path(), "http://127.0.0.1:9"));
    assert_eq!(run.status.code(), Some(2), "{}", stderr(&run));
    assert!(!out.path().join("records.jsonl").exists());
}

#[test]
fn probe_rejects_bad_options() {
    let tasks = tempfile::tempdir().unwrap();
    convert_curated(tasks.path());
    let task = tasks.path().join("de_Tense.txt");
    let out = tempfile::tempdir().unwrap();
    for extra in [["--classifier", "svm"], ["--runs", "0"], ["--aggregation", "max"]] {
        let mut args = vec!["probe", "--input", s(&task), "--output", s(out.path()), "--provider", "hash:8"];
        args.extend(extra);
        assert_eq!(polyprobe(&args).status.code(), Some(2), "{extra:?}");
    }
    let missing = out.path().join("nope.txt");
    assert_eq!(
        polyprobe(&["probe", "--input", s(&missing), "--output", s(out.path())]).status.code(),
        Some(2)
    );
}

#[test]
fn analyze_writes_json_and_graphml() {
    let tasks = tempfile::tempdir().unwrap();
    convert_curated(tasks.path());
    let records = tempfile::tempdir().unwrap();
    let all = vec![tasks.path().to_string_lossy().into_owned()];
    let run = polyprobe(&probe_args(&all, records.path(), "hash:16"));
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));

    let out = tempfile::tempdir().unwrap();
    let meta = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/languages.csv");
    let run = polyprobe(&[
        "analyze",
        "--input",
        s(records.path()),
        "--output",
        s(out.path()),
        "--meta",
        s(&meta),
        "--max-frechet",
        "1",
        "--min-abs-pearson",
        "0",
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let files = sorted_files(out.path());
    for expected in [
        "curves.json",
        "heatmap.json",
        "language-layer.json",
        "similarity-Number.json",
        "similarity-Number.graphml",
        "run-analyze.json",
    ] {
        assert!(files.contains(&expected.to_string()), "missing {expected}: {files:?}");
    }
    let curves: Value = serde_json::from_str(&fs::read_to_string(out.path().join("curves.json")).unwrap()).unwrap();
    assert_eq!(curves.as_array().unwrap().len(), 5);

    // Two Number curves (de, fi) with permissive thresholds give one edge.
    let graph: Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("similarity-Number.json")).unwrap()).unwrap();
    assert_eq!(graph["nodes"].as_array().unwrap().len(), 2);
    assert!(graph["edges"].as_array().unwrap().len() <= 1);
    assert_eq!(graph["nodes"][0]["family"], "Indo-European");
    let graphml = fs::read_to_string(out.path().join("similarity-Number.graphml")).unwrap();
    assert!(graphml.contains("<graphml"));
    assert!(graphml.contains("de_Number"));
}

#[test]
fn analyze_without_records_is_a_usage_error() {
    let empty = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let run = polyprobe(&["analyze", "--input", s(empty.path()), "--output", s(out.path())]);
    assert_eq!(run.status.code(), Some(2));
}
