use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drs-inekf"))
        .args(args)
        .output()
        .expect("spawn binary")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn simulate(dir: &Path, text: &str) -> String {
    let cfg = write_config(dir, "scenario.cfg", text);
    let out = dir.join("data.jsonl").to_str().unwrap().to_string();
    let o = cli(&["simulate", "--config", &cfg, "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn simulate_prints_summary_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", "case = A\nduration = 4\n");
    let (a, b) = (path(dir.path(), "a.jsonl"), path(dir.path(), "b.jsonl"));
    let o = cli(&["simulate", "--config", &cfg, "--out", &a]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("imu samples") && text.contains("max |v_c|"), "{text}");
    assert_eq!(code(&cli(&["simulate", "--config", &cfg, "--out", &b])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn malformed_config_names_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "case = A\nimu_rate = fast\n");
    let o = cli(&["simulate", "--config", &cfg, "--out", &path(dir.path(), "x.jsonl")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("imu_rate"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "unknown.cfg", "case = A\nwobble = 3\n");
    let o = cli(&["simulate", "--config", &cfg, "--out", &path(dir.path(), "x.jsonl")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("wobble"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_input_code() {
    assert_eq!(code(&cli(&["run"])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
    assert_eq!(
        code(&cli(&["run", "--dataset", "x", "--variant", "ekf", "--out", "y"])),
        1
    );
    assert_eq!(code(&cli(&["--help"])), 0);
}

#[test]
fn missing_dataset_is_input_error() {
    let dir = TempDir::new().unwrap();
    let o = cli(&[
        "run",
        "--dataset",
        &path(dir.path(), "nope.jsonl"),
        "--out",
        &path(dir.path(), "out"),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn zero_runs_is_input_error() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "case = A\nduration = 1\n");
    let o = cli(&["run", "--dataset", &data, "--runs", "0", "--out", &path(dir.path(), "out")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn simulate_run_eval_pipeline() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "case = A\nduration = 6\n");
    let out = path(dir.path(), "out");
    let o = cli(&[
        "run", "--dataset", &data, "--variant", "drs", "--runs", "3", "--seed", "5", "--out", &out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["report.json", "envelope.csv", "run_000.jsonl", "run_002.jsonl"] {
        assert!(Path::new(&out).join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&out).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"], 3);
    assert_eq!(report["variant"], "drs");
    let envelope = std::fs::read_to_string(Path::new(&out).join("envelope.csv")).unwrap();
    assert!(envelope.starts_with("t,v_x_min,"));

    // same inputs, same bytes
    let again = path(dir.path(), "again");
    let o = cli(&[
        "run", "--dataset", &data, "--variant", "drs", "--runs", "3", "--seed", "5", "--out", &again,
    ]);
    assert_eq!(code(&o), 0);
    for f in ["report.json", "envelope.csv", "run_001.jsonl"] {
        assert_eq!(
            std::fs::read(Path::new(&out).join(f)).unwrap(),
            std::fs::read(Path::new(&again).join(f)).unwrap(),
            "{f} differs"
        );
    }

    let est = Path::new(&out).join("run_001.jsonl");
    let eval_out = path(dir.path(), "eval.json");
    let o = cli(&["eval", "--dataset", &data, "--estimates", est.to_str().unwrap(), "--out", &eval_out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let single: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&eval_out).unwrap()).unwrap();
    assert_eq!(single["per_run"][0]["rms"], report["per_run"][1]["rms"]);
}

#[test]
fn eval_rejects_malformed_estimates() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "case = A\nduration = 1\n");
    let est = write_config(dir.path(), "est.jsonl", "{\"t\": 0.0, \"q\": [1, 0, 0]}\n");
    let o = cli(&["eval", "--dataset", &data, "--estimates", &est]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn obs_sweep_rows() {
    let o = cli(&["obs"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["sweep"].as_array().unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0]["rank"], 8);
    assert_eq!(rows[0]["yaw"], false);
    assert_eq!(rows[8]["tilt_deg"], 8.0);
    assert_eq!(rows[8]["rank"], 9);
    assert_eq!(rows[8]["yaw"], true);

    let o = cli(&["obs", "--no-orientation", "--max-tilt", "4"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["sweep"].as_array().unwrap().iter().all(|r| r["yaw"] == false));

    assert_eq!(code(&cli(&["obs", "--step", "0"])), 1);
}
