use std::process::{Command, Output};

fn ulz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ulz")).args(args).output().unwrap()
}

const HEADER: &str = "t,avg_cost,explore_frac,subopt_frac,onestep_inacc_frac,phrases,max_depth,seed,agent";

#[test]
fn solve_prints_lambda_and_dumps_json() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("j.json");
    let out = ulz(&["solve", "--env", "rps", "--alpha", "0.999", "--dump", dump.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("lambda* = -0.250000000"), "{text}");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dump).unwrap()).unwrap();
    assert_eq!(doc["policy"].as_array().unwrap().len(), 27);
    assert_eq!(doc["values"].as_array().unwrap().len(), 27);
}

#[test]
fn solve_reads_environment_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    let json = ulz_core::env::Environment::rps().to_json().unwrap();
    std::fs::write(&path, json).unwrap();
    let out = ulz(&["solve", "--env", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"horizon": 10, "checkpoints": [100]}"#).unwrap();
    assert_eq!(ulz(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(ulz(&["run", "--config", "/nonexistent/x.json"]).status.code(), Some(2));
    assert_eq!(ulz(&["solve", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(ulz(&["solve", "--env", "/nonexistent/env.json"]).status.code(), Some(2));
    assert_eq!(ulz(&["compare", "--agents", "nobody"]).status.code(), Some(2));
    assert_eq!(ulz(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let occupied = dir.path().join("occupied");
    std::fs::write(&occupied, "x").unwrap();
    let out = ulz(&[
        "compare",
        "--agents",
        "active-lz",
        "--horizon",
        "100",
        "--seeds",
        "1",
        "--out",
        occupied.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_with_agent_override_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    let out_dir = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"agents": ["active-lz"], "horizon": 2000, "seeds": [7], "output": "{}"}}"#,
            out_dir.display()
        ),
    )
    .unwrap();
    let out = ulz(&["run", "--config", cfg.to_str().unwrap(), "--agent", "predictive-lz"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("predictive-lz_seed7.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().ends_with(",7,predictive-lz"));
}

#[test]
fn compare_with_diagnostics_fills_every_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = ulz(&[
        "compare",
        "--agents",
        "active-lz,optimal",
        "--horizon",
        "5000",
        "--seeds",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
        "--diagnostics",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER);
    for line in text.lines().skip(1) {
        assert!(line.split(',').all(|f| !f.is_empty()), "{line}");
    }
}
