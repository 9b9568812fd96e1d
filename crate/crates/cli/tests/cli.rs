use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fracwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracwave"))
        .args(args)
        .env_remove("FRACWAVE_LOG")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// The structured error is the last stderr line.
fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr is not empty");
    let v: Value = serde_json::from_str(line).expect("error line is JSON");
    assert_eq!(v["schema_version"], 1);
    v["error"].clone()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn mlf_prints_versioned_json() {
    let out = fracwave(&["mlf", "--alpha", "1", "--z", "1"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["schema_version"], 1);
    let re = v["value"][0].as_f64().unwrap();
    assert!((re - std::f64::consts::E).abs() < 1e-14);
}

#[test]
fn validation_errors_exit_1() {
    let out = fracwave(&["mlf", "--alpha=-1", "--z", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_error(&out);
    assert_eq!(e["kind"], "domain");
    assert_eq!(e["exit_code"], 1);

    let out = fracwave(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["kind"], "usage");

    let out = fracwave(&["--threads", "0", "mlf", "--alpha", "1", "--z", "1"]);
    assert_eq!(out.status.code(), Some(1));

    let out = fracwave(&["calibrate", "--alpha", "1.5", "--gamma", "0.6", "--p", "2", "--l", "1"]);
    assert_eq!(out.status.code(), Some(1));

    let out = fracwave(&["fode", "--alpha", "1.5", "--gamma", "0.6", "--p", "2", "--horizon", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["kind"], "usage");
}

#[test]
fn numerical_failures_exit_2() {
    let out = fracwave(&["mlf", "--alpha", "1", "--z", "800"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "overflow");
}

#[test]
fn help_exits_0() {
    let out = fracwave(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("sweep"));
}

#[test]
fn fode_writes_report_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let traj = dir.path().join("w.csv");
    let out = fracwave(&[
        "fode",
        "--alpha",
        "1.5",
        "--gamma",
        "0.6",
        "--p",
        "2",
        "--w0",
        "1",
        "--horizon",
        "50",
        "--trajectory",
        traj.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["theorem_case"], "blowup-a");
    assert_eq!(v["observed"]["status"], "blowup");
    assert_eq!(v["agreement"], "confirmed");
    let t_star = v["t_star"].as_f64().unwrap();
    assert!(t_star > 6.0 && t_star < 7.0, "{t_star}");

    let csv = std::fs::read_to_string(&traj).unwrap();
    let mut lines = csv.split("\r\n");
    assert_eq!(lines.next(), Some("t,w"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    // 17 significant digits
    assert_eq!(first[1], "1.0000000000000000e0");
}

#[test]
fn config_files_need_a_schema_version() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "case.json",
        r#"{"name": "x", "params": {"alpha": 1.5, "gamma": 0.6, "p": 2, "a": 1, "b": 1},
            "data": {"solver": "scalar", "w0": 1, "w1": 0}, "horizon": 10}"#,
    );
    let out = fracwave(&["fode", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["kind"], "config");
}

#[test]
fn sweep_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.json",
        r#"{"schema_version": 1, "alphas": [1.5], "gammas": [0.3, 0.6], "ps": [2, 4],
            "scales": [0.01], "horizon": 20, "steps": 200}"#,
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (threads, path) in [("1", &a), ("3", &b)] {
        let out = fracwave(&["--threads", threads, "--out", path.to_str().unwrap(), "sweep", "--config", &cfg]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("alpha,gamma,p,scale,prediction,theorem_case,observed,t_star,error\r\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn pde_snapshot_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("u.csv");
    let out = fracwave(&[
        "pde",
        "--alpha",
        "1.5",
        "--gamma",
        "0.6",
        "--p",
        "3",
        "--u0",
        "0.01",
        "--modes",
        "16",
        "--horizon",
        "20",
        "--steps",
        "100",
        "--snapshot",
        snap.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["theorem_case"], "global-i");
    let csv = std::fs::read_to_string(&snap).unwrap();
    assert!(csv.starts_with("x,u\r\n"));
    assert!(csv.lines().count() > 16);
}

#[test]
fn probe_reports_fits() {
    let out = fracwave(&["probe", "--alpha", "1.5", "--gamma", "0.6", "--modes", "16", "--points", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let e = v["p_fit"]["exponent"].as_f64().unwrap();
    assert!((e + 1.5).abs() < 0.15, "{e}");
}
