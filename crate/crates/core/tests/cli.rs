use std::process::{Command, Output};

fn cwl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwl"))
        .args(args)
        .env_remove("CWL_THREADS")
        .output()
        .unwrap()
}

#[test]
fn spectrum_row() {
    let out = cwl(&["spectrum", "--N", "6", "--R", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("N,R,delta_eigen,delta_closed,phase_gap,sqrt_delta")
    );
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((row[2] - 0.75).abs() < 1e-9 && (row[3] - 0.75).abs() < 1e-12);
    assert!(row[4] >= row[5]);
}

#[test]
fn regimes_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    let out = cwl(&["regimes", "--step", "0.1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 11 * 12 / 2);
    assert!(text.starts_with("m_hat,k_hat,prior_best,chained_walk,improved"));
    assert_eq!(cwl(&["regimes", "--step", "0.03"]).status.code(), Some(1));
}

#[test]
fn tradeoff_to_stdout() {
    let out = cwl(&["tradeoff", "--mhat", "1.4", "--khat", "0.3", "--steps", "50"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 52);
    assert_eq!(
        cwl(&["tradeoff", "--mhat", "0.5", "--khat", "0"]).status.code(),
        Some(1)
    );
}

#[test]
fn randomized_commands_need_a_seed() {
    assert_eq!(
        cwl(&["verify-stats", "--R", "4", "--M", "64"]).status.code(),
        Some(1)
    );
    assert_eq!(
        cwl(&["simulate", "--n", "4", "--m", "4", "--k", "0", "--ell", "2"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn error_exit_codes() {
    // 8R < M is required
    assert_eq!(
        cwl(&["verify-stats", "--R", "32", "--M", "100", "--seed", "1"])
            .status
            .code(),
        Some(1)
    );
    let out = Command::new(env!("CARGO_BIN_EXE_cwl"))
        .args([
            "verify-stats",
            "--R",
            "4",
            "--M",
            "64",
            "--samples",
            "100",
            "--seed",
            "1",
        ])
        .env("CWL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(cwl(&["bogus"]).status.code(), Some(1));
    assert_eq!(cwl(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_reports_json() {
    let out = cwl(&[
        "simulate", "--n", "4", "--m", "4", "--k", "1", "--ell", "3", "--seed", "11",
    ]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 2);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 11);
    assert!(v["ledger"]["oracle_queries"].as_u64().is_some());
    assert_eq!(code == 2, v["status"] == "Exhausted");
}

#[test]
fn flagged_instance_exits_two() {
    // seed 7 at (4, 5) holds three collisions, fewer than the four requested
    let out = cwl(&[
        "simulate", "--n", "4", "--m", "5", "--k", "2", "--ell", "3", "--seed", "7",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "Exhausted");
}
