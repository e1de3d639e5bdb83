use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use patterncraft_eval::{Corpus, ExperimentReport};

fn patterncraft(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patterncraft")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = patterncraft(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Every file under `dir` with its bytes, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

const SMALL_CONFIG: &str = r#"{
  "corpus": {"named": "small"},
  "experiments": ["classifier", "generator", "transfer"],
  "generator": {"max_epochs": 3, "no_labels_max_epochs": 3, "transfer_max_epochs": 3}
}"#;

#[test]
fn evaluate_is_reproducible_and_tables_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.json"), SMALL_CONFIG).unwrap();
    let first = ok(&["evaluate", "--config", "exp.json", "--seed", "7", "--out", "a", "--format", "json"], dir.path());
    let second = ok(&["evaluate", "--config", "exp.json", "--seed", "7", "--out", "b", "--format", "json"], dir.path());
    assert_eq!(first.stdout, second.stdout);
    let a = snapshot(&dir.path().join("a"));
    assert_eq!(a, snapshot(&dir.path().join("b")));
    assert_eq!(a.len(), 6, "{:?}", a.keys());

    for name in ["classifier-seed7", "generator-seed7", "transfer-seed7"] {
        let report = ExperimentReport::from_json(&String::from_utf8(a[Path::new(&format!("{name}.json"))].clone()).unwrap()).unwrap();
        assert_eq!(report.seed, 7);
        let table = String::from_utf8(a[Path::new(&format!("{name}.txt"))].clone()).unwrap();
        assert_eq!(table, report.to_table());
        assert!(report.table_round_trips(), "{table}");
        let parsed = ExperimentReport::parse_table(&table).unwrap();
        for ((variant, cells), row) in parsed.iter().zip(&report.rows) {
            assert_eq!(variant, &row.variant);
            for ((mean, _), col) in cells.iter().zip(&row.columns) {
                assert_eq!(mean.to_bits(), col.mean.to_bits());
            }
        }
    }
    // the config file is not touched
    assert_eq!(std::fs::read_to_string(dir.path().join("exp.json")).unwrap(), SMALL_CONFIG);
}

#[test]
fn synthetic_corpus_passes_its_oracle_check() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth-corpus", "--spec", "default", "--seed", "1", "--out", "corpus"], dir.path());
    let corpus = Corpus::read(&dir.path().join("corpus")).unwrap();
    assert!(!corpus.annotations.is_empty());
    assert_eq!(corpus.verify(), Vec::<String>::new());
    assert_eq!(corpus.seed, Some(1));
}

#[test]
fn pipeline_is_byte_reproducible_and_leaves_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth-corpus", "--spec", "small", "--seed", "2", "--out", "corpus"], d);
    let corpus_before = snapshot(&d.join("corpus"));
    for run in ["1", "2"] {
        let out = |s: &str| format!("{s}{run}");
        ok(&["train-classifier", "--corpus", "corpus", "--seed", "4", "--forest-size", "30", "--out", &out("clf")], d);
        let model = format!("clf{run}/classifier.json");
        ok(&["autolabel", "--corpus", "corpus", "--model", &model, "--out", &out("auto")], d);
        ok(&["train-generator", "--corpus", "corpus", "--seed", "4", "--mode", "no-labels", "--max-epochs", "2", "--out", &out("parent")], d);
        let parent = format!("parent{run}/generator.weights");
        let auto = format!("auto{run}/annotations.json");
        ok(
            &["train-generator", "--corpus", "corpus", "--seed", "4", "--mode", "transfer", "--parent", &parent, "--auto", &auto, "--max-epochs", "2", "--out", &out("gen")],
            d,
        );
        ok(&["train-generator", "--corpus", "corpus", "--seed", "4", "--mode", "full", "--max-epochs", "2", "--out", &out("full")], d);
    }
    for stage in ["clf", "auto", "parent", "gen", "full"] {
        let a = snapshot(&d.join(format!("{stage}1")));
        assert!(!a.is_empty());
        assert_eq!(a, snapshot(&d.join(format!("{stage}2"))), "{stage} differs between runs");
    }
    assert_eq!(snapshot(&d.join("corpus")), corpus_before);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("gen1/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "transfer");
    assert_eq!(summary["epochs"], 2);
    let losses = std::fs::read_to_string(d.join("gen1/loss.csv")).unwrap();
    assert_eq!(losses.lines().count(), 3);

    let level = std::fs::read_dir(d.join("corpus/levels")).unwrap().next().unwrap().unwrap().path();
    let level = level.to_str().unwrap();
    let vocab: Vec<String> = Corpus::read(&d.join("corpus")).unwrap().vocabulary.names().to_vec();
    let gen = ok(
        &["generate", "--model", "gen1/generator.weights", "--level", level, "--x", "0", "--y", "6", "--label", &vocab[0], "--format", "json", "--out", "g"],
        d,
    );
    let value: serde_json::Value = serde_json::from_slice(&gen.stdout).unwrap();
    assert_eq!(value["tiles"].as_array().unwrap().len(), 8);
    assert_eq!(value["predicted_labels"].as_array().unwrap().len(), vocab.len());
    assert!(d.join("g/chunk.lvl").is_file());

    let bad = patterncraft(
        &["generate", "--model", "gen1/generator.weights", "--level", level, "--x", "0", "--y", "6", "--label", "no-such-pattern"],
        d,
    );
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("UnknownLabel"));
}

#[test]
fn exit_codes_separate_usage_from_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // missing mandatory seed
    assert_eq!(patterncraft(&["synth-corpus", "--spec", "small", "--out", "c"], d).status.code(), Some(2));
    assert_eq!(patterncraft(&["no-such-command"], d).status.code(), Some(2));
    assert_eq!(patterncraft(&["synth-corpus", "--spec", "nope", "--seed", "1", "--out", "c"], d).status.code(), Some(3));
    let missing = patterncraft(&["train-classifier", "--corpus", "absent", "--seed", "1", "--out", "c"], d);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error[MissingInput]"));
    assert!(!d.join("c").exists());

    // a classifier trained under another vocabulary is refused
    ok(&["synth-corpus", "--spec", "small", "--seed", "1", "--out", "small"], d);
    ok(&["synth-corpus", "--spec", "all-patterns", "--seed", "1", "--out", "all"], d);
    ok(&["train-classifier", "--corpus", "small", "--seed", "1", "--forest-size", "10", "--out", "clf"], d);
    let mismatch = patterncraft(&["autolabel", "--corpus", "all", "--model", "clf/classifier.json", "--out", "auto"], d);
    assert_eq!(mismatch.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("VocabularyMismatch"));

    let transfer = patterncraft(&["train-generator", "--corpus", "small", "--seed", "1", "--mode", "transfer", "--out", "g"], d);
    assert_eq!(transfer.status.code(), Some(3));
    std::fs::write(d.join("bad.json"), "{\"folds\": 1}").unwrap();
    assert_eq!(patterncraft(&["evaluate", "--config", "bad.json", "--seed", "1", "--out", "e"], d).status.code(), Some(3));
}
