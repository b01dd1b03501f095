mod common;

use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gap-acceptance")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_reports_exactness() {
    let ok = run(&["validate", &common::config_path("example1.toml")]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("HOLDS (analysis exact)"));
    let approx = run(&["validate", &common::config_path("example2.toml")]);
    assert_eq!(approx.status.code(), Some(0));
    assert!(stdout(&approx).contains("VIOLATED (analysis is a lower-bound approximation)"));
}

#[test]
fn capacity_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cap.csv");
    let o = run(&[
        "capacity",
        &common::config_path("example2.toml"),
        "--q-sweep",
        "250,500,750,1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "q_veh_per_hour,capacity_veh_per_hour,exact,defect");
    assert_eq!(lines.len(), 5);
    let cap: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((cap - 652.8).abs() < 0.05);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cap.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "capacity");
    assert!(manifest["version"].is_string());
    assert!(manifest["config_path"].as_str().unwrap().ends_with("example2.toml"));
    assert_eq!(manifest["overrides"]["q_sweep"][3], 1000.0);
}

#[test]
fn out_dir_and_attempts_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "queue",
        &common::config_path("example1.toml"),
        "--attempts-override",
        "25",
        "--minor-flow",
        "200",
        "--nmax",
        "12",
        "--epoch",
        "arbitrary",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("queue.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,probability,epoch");
    assert_eq!(lines.len(), 14);
    assert!(lines[1].ends_with(",arbitrary"));
    let manifest = std::fs::read_to_string(dir.path().join("queue.manifest.json")).unwrap();
    assert!(manifest.contains("\"attempts_override\": 25"));
    assert!(stdout(&o).contains("mean queue length"));
}

#[test]
fn simulation_output_is_reproducible() {
    let args = [
        "simulate",
        &common::config_path("example1.toml"),
        "--departures",
        "20000",
        "--warmup",
        "1000",
        "--replications",
        "3",
        "--seed",
        "9",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("q_veh_per_hour,capacity_veh_per_hour,"));
}

#[test]
fn compare_flags_rows() {
    let o = run(&[
        "compare",
        &common::config_path("example2.toml"),
        "--q-sweep",
        "500",
        "--departures",
        "50000",
        "--replications",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "q_veh_per_hour,analytic_veh_per_hour,simulated_veh_per_hour,ci_half_width,rel_error,exact,flag"
    );
    assert_eq!(lines.next().unwrap().split(',').count(), 7);
}

#[test]
fn service_summary() {
    let o = run(&["service", &common::config_path("example1.toml"), "--attempts-override", "25", "--s-values", "0,0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("s,lst_re,lst_im\n0,"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("E[G]"));
}

#[test]
fn exit_codes() {
    // configuration errors
    assert_eq!(run(&["capacity", "/nonexistent/config.toml"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(common::config_path("example1.toml")).unwrap();
    std::fs::write(&bad, text.replace("alpha = 0.9", "alpha = 1.5")).unwrap();
    assert_eq!(run(&["validate", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(
        run(&["queue", &common::config_path("example1.toml"), "--minor-flow", "-3"]).status.code(),
        Some(2)
    );
    // instability
    let o = run(&["queue", &common::config_path("example1.toml"), "--minor-flow", "700"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("unstable: rho="));
    // computation failure: too few attempts for the major flow
    let o = run(&["capacity", &common::config_path("example2.toml"), "--attempts-override", "10", "--q-sweep", "1000"]);
    assert_eq!(o.status.code(), Some(1));
}
