use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hscn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hscn")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = hscn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{args:?}: {e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write(path: &Path, lines: &[Value]) {
    let text: String = lines.iter().map(|v| format!("{v}\n")).collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn metrics_commands() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cands.jsonl");
    let train = dir.path().join("train.jsonl");
    write(
        &data,
        &[
            serde_json::json!({"hs": "h one", "cn": "a b c d e"}),
            serde_json::json!({"hs": "h two", "cn": "a b c d e"}),
        ],
    );
    write(&train, &[serde_json::json!({"hs": "h one", "cn": "x y z"})]);
    let data = data.to_str().unwrap();

    // Stream "a b c d e a b c d e": non-singleton shares 5/5, 4/5, 3/5, 2/5.
    let rr = ok_json(&["metrics", "rr", "--data", data]);
    let expected = (1.0f64 * 0.8 * 0.6 * 0.4).powf(0.25) * 100.0;
    assert!((rr["rr"].as_f64().unwrap() - expected).abs() < 1e-9, "{rr}");
    let rr = ok_json(&["metrics", "rr", "--data", data, "--dedup"]);
    assert_eq!(rr["rr"].as_f64().unwrap(), 0.0, "{rr}");

    let nov = ok_json(&["metrics", "novelty", "--data", data, "--train", train.to_str().unwrap()]);
    assert_eq!(nov["novelty"].as_f64().unwrap(), 1.0, "{nov}");

    let out = hscn(&["metrics", "rr", "--data", "/nonexistent/file.jsonl"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "storage");
}

#[test]
fn store_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let store = store.to_str().unwrap();
    let hs = dir.path().join("hs.txt");
    std::fs::write(&hs, "Foreign workers are stealing our jobs.\nEvery mosque in this country is a training camp for extremists.\n").unwrap();
    let cands = dir.path().join("cands.jsonl");

    let out = hscn(&[
        "author", "run", "--hs-file", hs.to_str().unwrap(), "--seed", "3", "--out", cands.to_str().unwrap(),
        "--store", store,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(&cands).unwrap();
    assert!(lines.lines().count() >= 2);

    for ann in ["a", "b"] {
        for id in ["g0", "g1"] {
            ok_json(&["review", "score", "--store", store, "--pair", id, "--annotator", ann, "--score", "2"]);
        }
    }
    ok_json(&["experiment", "open", "--store", store, "--experiment", "e", "--operators", "op0,op1", "--seed", "1"]);
    let routed = ok_json(&[
        "experiment", "route", "--store", store, "--experiment", "e", "--condition", "human_geq2", "--session-size", "1",
    ]);
    assert_eq!(routed["routed"], 2, "{routed}");

    for op in ["op0", "op1"] {
        let item = ok_json(&["expert", "next", "--store", store, "--operator", op]);
        let pair = item["pair_id"].as_str().unwrap();
        ok_json(&["expert", "decision", "--store", store, "--pair", pair, "--operator", op, "--action", "validate"]);
    }
    let report = ok_json(&["report", "--store", store, "--condition", "human_geq2"]);
    assert_eq!(report["accepted"], 2, "{report}");
    assert_eq!(report["pairs_final"], 100.0);

    let verify = hscn(&["store", "verify", "--store", store]);
    assert!(verify.status.success(), "{}", String::from_utf8_lossy(&verify.stderr));

    let exported = dir.path().join("accepted.jsonl");
    let out = hscn(&["store", "export-accepted", "--store", store, "--out", exported.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(exported).unwrap().lines().count(), 2);
}

#[test]
fn usage_and_domain_errors_differ() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().to_str().unwrap();
    let out = hscn(&["report", "--store", store, "--condition", "crowd"]);
    assert_eq!(out.status.code(), Some(2));

    let out = hscn(&["report", "--store", store, "--condition", "machine"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "no_events");
}
