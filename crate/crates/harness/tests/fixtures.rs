//! The shipped fixtures under `fixtures/` are generated from the mock suites.
//! Run with `TRACEWARDEN_BLESS=1` to rewrite them after changing a suite.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use tracewarden::config::RunConfig;
use tracewarden::io::read_instances;
use tracewarden::suites::{confidence_suite, game24_suite, kstable_suite, Suite};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

fn config(method: serde_json::Value) -> String {
    pretty(&json!({
        "instances": "instances.json",
        "backend": {"type": "mock", "script": "mock.json"},
        "method": method,
    }))
}

fn expected() -> Vec<(PathBuf, String)> {
    let mut files = Vec::new();
    let mut add = |dir: &str, suite: Suite, configs: Vec<(&str, serde_json::Value)>| {
        let d = root().join(dir);
        files.push((d.join("instances.json"), pretty(&suite.instances)));
        files.push((d.join("mock.json"), pretty(&suite.script)));
        for (name, method) in configs {
            files.push((d.join(name), config(method)));
        }
    };
    add(
        "spatial_kstable",
        kstable_suite(20, Some(4), 100).unwrap(),
        vec![("cot.json", json!({"method": "cot"})), ("kstable.json", json!({"method": "k_stable", "k": 3}))],
    );
    add(
        "spatial_confidence",
        confidence_suite(12, 300).unwrap(),
        vec![
            ("cot.json", json!({"method": "cot"})),
            ("eat.json", json!({"method": "eat", "threshold": 0.1, "alpha": 1.0})),
            ("deer.json", json!({"method": "deer", "threshold": 0.9})),
        ],
    );
    add(
        "game24_stepverify",
        game24_suite(20, 500).unwrap(),
        vec![("cot.json", json!({"method": "cot"})), ("stepverify.json", json!({"method": "step_verify"}))],
    );
    files
}

#[test]
fn fixtures_match_their_generators() {
    let bless = std::env::var_os("TRACEWARDEN_BLESS").is_some();
    let mut stale = Vec::new();
    for (path, text) in expected() {
        if bless {
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(&path, &text).unwrap();
        } else if fs::read_to_string(&path).ok().as_deref() != Some(text.as_str()) {
            stale.push(path.display().to_string());
        }
    }
    assert!(stale.is_empty(), "stale fixtures (rerun with TRACEWARDEN_BLESS=1): {stale:?}");
}

#[test]
fn fixture_configs_load() {
    for (path, _) in expected() {
        let name = path.file_name().unwrap().to_str().unwrap();
        if name == "instances.json" {
            assert!(!read_instances(&path).unwrap().is_empty());
        } else if name != "mock.json" {
            let cfg = RunConfig::load(&path).unwrap();
            cfg.factory().unwrap();
            assert!(cfg.instances.unwrap().exists());
        }
    }
}
