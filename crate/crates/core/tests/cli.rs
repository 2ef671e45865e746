//! The built binary, driven the way a user would.

mod common;

use std::path::Path;
use std::process::Output;

use common::*;
use knight::store::{self, DatasetRecord};
use serde_json::Value;

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn flag_beats_env_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("k.toml"), "[pipeline]\nnum_q = 4\nd_max = 3\n").unwrap();
    let conf = ["--print-config", "--config", "k.toml"];

    let out = stdout(&ok(knight(dir.path(), &conf, &[])));
    assert!(out.contains("num_q = 4") && out.contains("d_max = 3"), "{out}");

    let out = stdout(&ok(knight(dir.path(), &conf, &[("KNIGHT_NUM_Q", "6")])));
    assert!(out.contains("num_q = 6") && out.contains("d_max = 3"), "{out}");

    let out = stdout(&ok(knight(dir.path(), &[&conf[..], &["--num-q", "7"]].concat(), &[("KNIGHT_NUM_Q", "6")])));
    assert!(out.contains("num_q = 7"), "{out}");

    let out = stdout(&ok(knight(dir.path(), &["--print-config"], &[("KNIGHT_CONFIG", "k.toml")])));
    assert!(out.contains("d_max = 3"), "{out}");
}

#[test]
fn secrets_never_printed() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(knight(dir.path(), &["--print-config"], &[("OPENAI_API_KEY", "sk-live-123"), ("NEO4J_PASS", "hunter2")]));
    let text = stdout(&out);
    assert!(!text.contains("sk-live-123") && !text.contains("hunter2"), "{text}");
    assert_eq!(text.matches(knight::config::REDACTED).count(), 2, "{text}");
}

#[test]
fn network_backend_without_key_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = knight(dir.path(), &["--topic", "Biology", "--output", "x.json", "--backend", "network"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error:") && err.contains("OPENAI_API_KEY"), "{err}");
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn bolt_store_needs_uri() {
    let dir = tempfile::tempdir().unwrap();
    let out = knight(dir.path(), &["build", "--topic", "Biology", "--output", "g.json", "--store", "bolt"], &[]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("NEO4J_URI"), "{}", stderr(&out));
}

#[test]
fn subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(knight(d, &["build", "--topic", "History", "--depth", "2", "--output", "g.json"], &[]));
    let snapshot = json(&d.join("g.json"));
    assert_eq!(snapshot["topic"], "History");
    assert!(snapshot["nodes"].as_array().unwrap().len() > 1);
    assert!(d.join("g.curation_rejects.jsonl").exists());

    ok(knight(d, &["generate", "--input", "g.json", "--num-q", "6", "--output", "items.jsonl"], &[]));
    let items: Vec<DatasetRecord> = store::read_jsonl(&d.join("items.jsonl")).unwrap();
    assert!(!items.is_empty() && items.len() <= 6);
    assert!(items.iter().all(|r| r.validation.is_none() && r.level == 2 && r.path.len() == 2));

    ok(knight(d, &["validate", "--input", "items.jsonl", "--output", "checked.jsonl"], &[]));
    let checked: Vec<DatasetRecord> = store::read_jsonl(&d.join("checked.jsonl")).unwrap();
    assert_eq!(checked.len(), items.len());
    assert!(checked.iter().all(|r| r.validation.is_some()));
    for (a, b) in items.iter().zip(&checked) {
        assert_eq!((&a.id, &a.question, &a.options), (&b.id, &b.question, &b.options));
    }

    let out = stdout(&ok(knight(d, &["eval", "--input", "checked.jsonl"], &[])));
    let metrics: Value = serde_json::from_str(&out).unwrap();
    assert!(metrics.is_object(), "{out}");
    ok(knight(d, &["eval", "--input", "checked.jsonl", "--output", "m.json"], &[]));
    assert_eq!(json(&d.join("m.json")), metrics);
}

#[test]
fn report_ledger_follows_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let tags = |mode: &str| -> Vec<String> {
        let out = format!("{mode}.json");
        ok(knight(d, &["--topic", "Hafez", "--num-q", "4", "--mode", mode, "--output", &out], &[]));
        let report = json(&d.join(format!("{mode}.report.json")));
        let per_task = report["tokens"]["per_task"].as_object().unwrap();
        per_task.iter().filter(|(_, c)| c["calls"].as_u64().unwrap() > 0).map(|(t, _)| t.clone()).collect()
    };
    assert_eq!(tags("plain"), ["mcq_forward"]);
    assert_eq!(tags("rag"), ["mcq_forward", "title_check"]);
    assert!(!d.join("rag.graph.json").exists());
    let knight_tags = tags("knight");
    assert_eq!(knight_tags.len(), 6, "{knight_tags:?}");
    assert!(d.join("knight.graph.json").exists());
}

#[test]
fn same_invocation_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(knight(a.path(), &BIOLOGY_INVOCATION, &[("KNIGHT_MAX_INFLIGHT", "1")]));
    ok(knight(b.path(), &BIOLOGY_INVOCATION, &[("KNIGHT_MAX_INFLIGHT", "8")]));
    for f in ["bio_d2.json", "bio_d2.curation_rejects.jsonl"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    // the snapshot embeds the config, max_inflight included
    let (ga, gb) = (json(&a.path().join("bio_d2.graph.json")), json(&b.path().join("bio_d2.graph.json")));
    for key in ["nodes", "edges", "seed_id", "report"] {
        assert_eq!(ga[key], gb[key], "{key}");
    }
}

#[test]
fn corrupt_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "{\"id\": 1}\n").unwrap();
    let out = knight(dir.path(), &["eval", "--input", "bad.jsonl"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));

    std::fs::write(dir.path().join("old.json"), "{\"schema_version\": 99}").unwrap();
    let out = knight(dir.path(), &["generate", "--input", "old.json", "--output", "o.jsonl"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("99"), "{}", stderr(&out));
}
