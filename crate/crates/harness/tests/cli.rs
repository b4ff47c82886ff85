//! The `tracewarden` binary end to end on the shipped fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracewarden")).args(args).current_dir(dir).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_deterministic_instances() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["maze", "spatialmap", "game24"] {
        let a = dir.path().join(format!("{kind}-a.json"));
        let b = dir.path().join(format!("{kind}-b.json"));
        for out in [&a, &b] {
            ok(&bin(&["gen", "--kind", kind, "--n", "6", "--seed", "9", "--out", s(out)], dir.path()));
        }
        let text = fs::read_to_string(&a).unwrap();
        assert_eq!(text, fs::read_to_string(&b).unwrap());
        assert_eq!(serde_json::from_str::<Vec<serde_json::Value>>(&text).unwrap().len(), 6);
    }
    let bad = bin(&["gen", "--kind", "maze", "--n", "1", "--out", "x.json", "--question", "nope"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture("game24_stepverify");
    let cot = dir.path().join("cot.jsonl");
    let sv = dir.path().join("sv.jsonl");
    let out = ok(&bin(&["run", "--config", s(&fx.join("cot.json")), "--log", s(&cot)], dir.path()));
    assert!(out.contains("20 instances: 20 run"), "{out}");
    ok(&bin(&["run", "--config", s(&fx.join("stepverify.json")), "--log", s(&sv)], dir.path()));
    let again = ok(&bin(&["run", "--config", s(&fx.join("stepverify.json")), "--log", s(&sv)], dir.path()));
    assert!(again.contains("0 run, 20 already logged"), "{again}");

    let table = ok(&bin(&["report", "--log", s(&sv), "--baseline-log", s(&cot)], dir.path()));
    assert!(table.contains("stepverify"), "{table}");
    let json = ok(&bin(&["report", "--log", s(&sv), "--baseline-log", s(&cot), "--json"], dir.path()));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let rows = v["rows"].as_array().unwrap();
    let sv_row = rows.iter().find(|r| r["method"] == "stepverify").unwrap();
    assert_eq!(sv_row["soundness_pct"], 100.0);
    assert!(sv_row["accuracy_pct"].as_f64().unwrap() > rows[0]["accuracy_pct"].as_f64().unwrap());
}

#[test]
fn sweep_prints_the_selection() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture("spatial_kstable");
    let out = ok(&bin(
        &["sweep", "--config", s(&fx.join("kstable.json")), "--dimension", "k", "--values", "1,2,3,5", "--out-dir", "sw"],
        dir.path(),
    ));
    assert!(out.contains("selection: Some(3.0) (Selected)"), "{out}");
    assert!(dir.path().join("sw/k-3.jsonl").exists());
    assert!(dir.path().join("sw/baseline.jsonl").exists());
    let bad = bin(&["sweep", "--config", s(&fx.join("kstable.json")), "--dimension", "depth"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn verify_exit_status_follows_the_states() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.txt");
    let bad = dir.path().join("bad.txt");
    fs::write(&good, "So 8 / (3 - 8 / 3) = 24\n").unwrap();
    fs::write(&bad, "Try 8 + 8 + 3 + 3 = 24\n").unwrap();
    let out = bin(&["verify", "--kind", "game24", "--trace-file", s(&good), "--numbers", "3,3,8,8"], dir.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 states, 0 failed"));
    assert!(out.status.success());
    let out = bin(&["verify", "--kind", "game24", "--trace-file", s(&bad), "--numbers", "3,3,8,8"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    // spatial against a generated map
    let inst = fixture("spatial_kstable").join("instances.json");
    let trace = dir.path().join("sp.txt");
    fs::write(&trace, "Nothing relational here.\n").unwrap();
    let out = bin(&["verify", "--kind", "spatialmap", "--trace-file", s(&trace), "--instance-file", s(&inst)], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin(&["verify", "--kind", "maze", "--trace-file", s(&trace)], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
