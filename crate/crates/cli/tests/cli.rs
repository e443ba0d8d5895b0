use std::path::Path;
use std::process::{Command, Output};

fn changeq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_changeq")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "scenario = \"small\"\nhorizon = 1500\nchange_point = 800\nn_runs = 20\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_outputs_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let stdout = ok(&changeq(&[
        "run",
        &cfg,
        "--out-dir",
        a.to_str().unwrap(),
        "--seed",
        "9",
    ]));
    assert!(stdout.contains("ttaql") && stdout.contains("oracle"));
    ok(&changeq(&[
        "--seed",
        "9",
        "--jobs",
        "2",
        "run",
        &cfg,
        "--out-dir",
        b.to_str().unwrap(),
    ]));
    for f in ["runs.csv", "series.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let runs = std::fs::read_to_string(a.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 20 * 4);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 9);
    assert_eq!(summary["n_runs"], 20);
}

#[test]
fn runs_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("o");
    ok(&changeq(&[
        "run",
        &cfg,
        "--runs",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
        "--discounted-series",
    ]));
    let runs = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 3 * 4);
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(series.lines().next().unwrap().ends_with("oracle_discounted"));
}

#[test]
fn table_subcommand_selects_cases() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&changeq(&[
        "table1",
        "--rates",
        "4:1.8",
        "--eta",
        "0.92",
        "--runs",
        "40",
        "--calibration-runs",
        "100",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]));
    assert!(stdout.contains("full_stock") && stdout.contains("learned"));
    let csv = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn oracle_check_reports_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("o.toml");
    std::fs::write(&cfg, "beta = 0.95\nhorizon = 3000\n").unwrap();
    let stdout = ok(&changeq(&[
        "oracle-check",
        cfg.to_str().unwrap(),
        "--runs",
        "4",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]));
    assert!(stdout.contains("bellman residual") && stdout.contains(": ok"));
    assert!(dir.path().join("oracle_check.json").exists());
}

#[test]
fn default_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.toml");
    std::fs::write(&path, ok(&changeq(&["default-config", "--n7"]))).unwrap();
    let out = dir.path().join("o");
    ok(&changeq(&[
        "run",
        path.to_str().unwrap(),
        "--runs",
        "1",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"capacity\": 7"));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "capacity = \"five\"\n").unwrap();
    let out = changeq(&["run", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
    assert!(!changeq(&["run", "/nonexistent/config.toml"]).status.success());
    assert!(!changeq(&["table2", "--rates", "nope"]).status.success());
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["inventory_n5.toml", "inventory_n7.toml"] {
        changeq::ExperimentConfig::load(&root.join(name)).unwrap();
    }
}
