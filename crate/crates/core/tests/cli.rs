mod common;

use common::{bundle_copy, run_cli};

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_cli(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run_cli(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(run_cli(dir.path(), &["analyze"]).status.code(), Some(2));
}

#[test]
fn analyze_prints_every_metric() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("snippet.py");
    std::fs::write(&file, "def f(x):\n    if x:\n        return 1\n    return 0\n").unwrap();
    let out = run_cli(dir.path(), &["analyze", file.to_str().unwrap(), "--weights", "1,1,0,1,0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["loc", "cyclomatic", "halstead_volume", "cognitive", "maintainability", "combined"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["loc"], 4);
    assert_eq!(v["cyclomatic"], 2);
    assert_eq!(v["combined"].as_f64().unwrap(), 4.0 + 2.0 + 1.0);
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(dir.path(), &["analyze", "missing.py"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    std::fs::write(dir.path().join("bad.toml"), "unknown_key = 1\n").unwrap();
    let out = run_cli(dir.path(), &["--config", "bad.toml", "templates"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn templates_list_every_pet() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(dir.path(), &["templates"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["Zero-shot", "Few-shot CoT", "Self-planning", "Progressive Hint", "Self-debug"] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn replay_miss_is_reported_per_run() {
    let dir = bundle_copy();
    std::fs::remove_dir_all(dir.path().join("cache")).unwrap();
    std::fs::create_dir(dir.path().join("cache")).unwrap();
    let out = run_cli(dir.path(), &["--config", "config.toml", "benchmark", "--pets", "zero_shot"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["failures"].as_array().unwrap().len(), 20);
    assert_eq!(v["backend_calls"], 0);
}
