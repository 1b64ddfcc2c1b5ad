use std::path::Path;
use std::process::{Command, Output};

use keyframe_memory::weights::{load, save, WeightMap};

fn kfm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfm")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kfm(&["run", "--task", "search", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(kfm(&["run", "--task", "search", "--hl", "psychic"], dir.path()).status.code(), Some(2));
    assert_eq!(kfm(&["run", "--task", "knitting"], dir.path()).status.code(), Some(2));
}

#[test]
fn run_then_replay_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfm(&["run", "--task", "dust", "--seed", "4", "--ll-fail", "0.2", "--out", "runs"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(line["status"], "terminal");
    assert!(dir.path().join("runs/manifest.json").exists());
    let o = kfm(&["replay", "--rerun", "runs/dust-oracle-4.jsonl"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("\"verdict\":\"identical\""));
}

#[test]
fn tampered_log_differs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(kfm(&["run", "--task", "counting", "--seed", "2", "--out", "."], dir.path()).status.success());
    let path = dir.path().join("counting-oracle-2.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let digest = text.lines().last().unwrap().split("\"final_state_digest\":\"").nth(1).unwrap()[..8].to_string();
    std::fs::write(&path, text.replace(&digest, "00000000")).unwrap();
    let o = kfm(&["replay", "counting-oracle-2.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("differs"));
}

#[test]
fn timeouts_exit_1_and_eval_reads_logs() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfm(
        &["run", "--task", "search", "--hl", "none", "--seed", "0", "--count", "2", "--max-ticks", "15", "--out", "r"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = kfm(&["eval", "--logs", "r", "--no-offline"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("method"));
}

#[test]
fn config_file_is_strict_and_overridable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"hl": "oracle", "colour": 1}"#).unwrap();
    assert_eq!(kfm(&["--config", "bad.json", "run", "--task", "search"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("ok.json"), r#"{"hl": "short", "run": {"max_ticks": 12}}"#).unwrap();
    let o = kfm(&["--config", "ok.json", "run", "--task", "search", "--max-ticks", "400", "--out", "o"], dir.path());
    let line: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(line["hl"], "short");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["run"]["max_ticks"], 400);
}

#[test]
fn merge_writes_interpolated_map() {
    let dir = tempfile::tempdir().unwrap();
    let one = |v: f32| -> WeightMap { [("w".to_string(), vec![v; 3])].into_iter().collect() };
    save(&one(0.0), &dir.path().join("pre.wmap")).unwrap();
    save(&one(10.0), &dir.path().join("ft.wmap")).unwrap();
    let o = kfm(&["merge", "--pre", "pre.wmap", "--ft", "ft.wmap", "--out", "m.wmap"], dir.path());
    assert!(o.status.success());
    assert_eq!(load(&dir.path().join("m.wmap")).unwrap()["w"], vec![8.0; 3]);
    save(&[("v".to_string(), vec![1.0])].into_iter().collect(), &dir.path().join("other.wmap")).unwrap();
    let o = kfm(&["merge", "--pre", "pre.wmap", "--ft", "other.wmap", "--out", "x.wmap"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn datagen_writes_valid_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfm(&["datagen", "--task", "search", "--count", "2", "--out", "ds"], dir.path());
    assert!(o.status.success());
    let prompts = std::fs::read_to_string(dir.path().join("ds/prompts.jsonl")).unwrap();
    for line in prompts.lines() {
        keyframe_memory::datagen::validate_record(&serde_json::from_str(line).unwrap(), 8).unwrap();
    }
}
