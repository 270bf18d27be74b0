//! End-to-end smoke tests of the `spsc` binary.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spsc"))
}

fn temp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("spsc-cli-test-{}-{name}", std::process::id()));
    p
}

fn tiny_config() -> PathBuf {
    let path = temp_path("config.json");
    std::fs::write(
        &path,
        r#"{
            "d": 4, "r": 1, "K": 2, "T": 200, "n_actions": 6,
            "sigma_eps": 0.3, "rho_A": 0.995, "sigma_eta": 0.05,
            "W": 50, "probe_period": 25, "seeds": 2,
            "methods": ["spsc", "linucb"]
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn run_emits_one_csv_row() {
    let config = tiny_config();
    let out = temp_path("run.csv");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(&out)
        .args(["--method", "spsc", "--seed", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "experiment,d,r,K,T,seed,method,control_regret,costed_regret,probe_count,subspace_error_final,wall_ms"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].contains(",spsc,"));
}

#[test]
fn run_json_parses_and_trace_is_emitted() {
    let config = tiny_config();
    let out = temp_path("run.json");
    let trace = temp_path("trace.csv");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(&out)
        .args(["--format", "json", "--trace-out"])
        .arg(&trace)
        .status()
        .unwrap();
    assert!(status.success());
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 1);
    assert_eq!(rows[0]["method"], "spsc");
    assert_eq!(rows[0]["T"], 200);
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("t,value\n"));
    assert_eq!(trace_text.lines().count(), 201);
}

#[test]
fn grid_quick_runs_both_methods() {
    let config = tiny_config();
    let out = temp_path("grid.csv");
    let status = bin()
        .args(["grid", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(&out)
        .args(["--quick", "--seeds", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains(",spsc,"));
    assert!(text.contains(",linucb,"));
}

#[test]
fn ablate_rejects_unknown_kind() {
    let config = tiny_config();
    let out = bin()
        .args(["ablate", "frobnicate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown ablation kind"), "stderr: {stderr}");
}

#[test]
fn run_rejects_unknown_method() {
    let config = tiny_config();
    let out = bin()
        .args(["run", "--method", "frobnicate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn rate_emits_two_column_csv() {
    let config = tiny_config();
    let out = temp_path("rate.csv");
    let status = bin()
        .args(["rate", "--config"])
        .arg(&config)
        .args(["--seeds", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("probes,mean_error\n"));
    assert!(text.lines().count() >= 3);
}
