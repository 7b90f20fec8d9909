use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn deedchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deedchain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn run_emits_a_passing_report() {
    let out = deedchain(&["run", "bundled:happy_path"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json_of(&out);
    assert_eq!(report["all_passed"], true);
    assert_eq!(report["contracts"]["villa-sale"]["state"], "completed");
}

#[test]
fn out_flag_writes_the_same_bytes_as_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("report.json");
    let to_file = deedchain(&["run", "bundled:termination", "--out", path(&file)]);
    assert!(to_file.status.success());
    assert!(to_file.stdout.is_empty());
    let stdout = deedchain(&["run", "bundled:termination"]).stdout;
    assert_eq!(std::fs::read(&file).unwrap(), stdout);
}

#[test]
fn seed_flag_changes_the_run() {
    let base = json_of(&deedchain(&["run", "bundled:happy_path"]));
    let reseeded = json_of(&deedchain(&["run", "bundled:happy_path", "--seed", "other-seed"]));
    assert_eq!(reseeded["seed"], "other-seed");
    assert_ne!(base["final_head"], reseeded["final_head"]);
    assert_eq!(reseeded["all_passed"], true);
}

#[test]
fn config_flag_replaces_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{"rates": {"commission_bps": 500}}"#).unwrap();
    let out = deedchain(&["run", "bundled:happy_path", "--config", path(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json_of(&out)["script"]["config"]["rates"]["commission_bps"], 500);

    std::fs::write(&cfg, r#"{"rates": {"commission": 500}}"#).unwrap();
    let bad = deedchain(&["run", "bundled:happy_path", "--config", path(&cfg)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn script_files_run_and_malformed_ones_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("s.json");
    std::fs::write(
        &script,
        r#"{"seed": "file-seed", "actors": [{"role": "owner", "label": "alice", "seed": "alice-seed"}],
            "events": [{"at_tick": 1, "actor": "alice", "action": "onboard"}]}"#,
    )
    .unwrap();
    let out = deedchain(&["run", path(&script)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json_of(&out)["events"][0]["result"], "ok");

    std::fs::write(&script, r#"{"seed": "x", "actors": [], "events": [{"at_tick": 1, "actor": "ghost", "action": "onboard"}]}"#)
        .unwrap();
    let bad = deedchain(&["run", path(&script)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ghost"));

    assert_eq!(deedchain(&["run", "bundled:nope"]).status.code(), Some(2));
}

#[test]
fn check_reproduces_a_run_log_and_flags_edits() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.json");
    assert!(deedchain(&["run", "bundled:replay_nonce", "--out", path(&log)]).status.success());
    let ok = deedchain(&["check", path(&log)]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(json_of(&ok)["reproduced"], true);

    let mut report: Value = serde_json::from_str(&std::fs::read_to_string(&log).unwrap()).unwrap();
    report["events"][3]["result"] = "error:Forged".into();
    std::fs::write(&log, serde_json::to_string_pretty(&report).unwrap() + "\n").unwrap();
    let edited = deedchain(&["check", path(&log)]);
    assert_eq!(edited.status.code(), Some(1));
    let summary = json_of(&edited);
    assert_eq!(summary["reproduced"], false);
    assert_eq!(summary["first_divergent_event"], 3);
}

#[test]
fn snapshot_restores_and_tampering_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("snap");
    let made = deedchain(&["snapshot", path(&snap), "--script", "bundled:happy_path"]);
    assert!(made.status.success(), "{}", String::from_utf8_lossy(&made.stderr));
    let manifest = json_of(&made);

    let restored = deedchain(&["restore", path(&snap)]);
    assert!(restored.status.success(), "{}", String::from_utf8_lossy(&restored.stderr));
    let summary = json_of(&restored);
    assert_eq!(summary["head"], manifest["head"]);
    assert_eq!(summary["contracts"]["villa-sale"]["state"], "completed");

    let chain = snap.join("chain.jsonl");
    let text = std::fs::read_to_string(&chain).unwrap();
    let tampered = text.replacen("\"timestamp\":1,", "\"timestamp\":0,", 1);
    assert_ne!(tampered, text);
    std::fs::write(&chain, tampered).unwrap();
    let refused = deedchain(&["restore", path(&snap)]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("restoring"));
}

#[test]
fn snapshot_at_tick_zero_holds_only_genesis() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("empty");
    let made = deedchain(&["snapshot", path(&snap), "--tick", "0"]);
    assert!(made.status.success());
    let manifest = json_of(&made);
    assert_eq!(manifest["chain_len"], 0);
    assert_eq!(manifest["store_objects"], 0);
    assert!(deedchain(&["restore", path(&snap)]).status.success());
}

#[test]
fn keygen_is_deterministic_and_checks_seed_length() {
    let a = deedchain(&["keygen", "a-sixteen-byte-seed"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, deedchain(&["keygen", "a-sixteen-byte-seed"]).stdout);
    let k = json_of(&a);
    assert_eq!(k["public"].as_str().unwrap().len(), 64);
    assert!(k["identity"].as_str().unwrap().starts_with("1220"));
    assert!(k.get("private").is_none());
    assert_ne!(a.stdout, deedchain(&["keygen", "b-sixteen-byte-seed"]).stdout);
    assert_eq!(deedchain(&["keygen", "short"]).status.code(), Some(2));
}
