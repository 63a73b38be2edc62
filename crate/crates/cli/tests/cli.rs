use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn amc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amc"))
        .args(args)
        .output()
        .expect("amc runs")
}

fn write_config(dir: &Path, config: &Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn fixture_config(name: &str, h: f64) -> Value {
    let q = |quantity: &str| json!({"type": "fixture", "name": name, "quantity": quantity});
    json!({
        "domain": {"kind": "disk", "params": {"radius": 1.0}, "h_grid": h},
        "problem": {"theta": 0.25, "f": q("f"), "phi": q("u"), "psi": q("w")},
        "seed": 3
    })
}

fn trivial_config() -> Value {
    json!({
        "domain": {"kind": "disk", "params": {"radius": 1.0}, "h_grid": 0.0625},
        "problem": {
            "theta": 0.25,
            "f": {"type": "const", "value": 0.0},
            "phi": {"type": "poly", "terms": [[2, 0, 0.5], [0, 2, 0.5]]},
            "psi": {"type": "const", "value": 1.0}
        }
    })
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timing(mut report: Value) -> Value {
    report.as_object_mut().unwrap().remove("timing");
    report
}

/// Runs `command` twice into separate directories; returns both outputs.
fn run_twice(command: &str, config: &Value) -> (TempDir, TempDir) {
    let dirs = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&dirs.0, &dirs.1] {
        let cfg = write_config(d.path(), config);
        let out = d.path().join("out");
        let o = amc(&[command, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    dirs
}

#[test]
fn trivial_solve_is_immediate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &trivial_config());
    let out = dir.path().join("out");
    let o = amc(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["status"], "ok");
    assert!(r["results"]["solve"]["outer_iterations"].as_u64().unwrap() <= 2);
    assert!(r["timing"]["solve"]["wall_seconds"].is_number());
    assert!(out.join("u.csv").exists() && out.join("w.csv").exists());
}

#[test]
fn solve_and_verify_reports_are_reproducible() {
    for (command, files) in [("solve", &["u.csv", "w.csv"][..]), ("verify", &["verify.json", "u.csv"][..])] {
        let (a, b) = run_twice(command, &fixture_config("radial_mild", 0.0625));
        let (a, b) = (a.path().join("out"), b.path().join("out"));
        assert_eq!(
            without_timing(read_json(&a.join("report.json"))),
            without_timing(read_json(&b.join("report.json"))),
            "{command}"
        );
        for f in files {
            let x = std::fs::read(a.join(f)).unwrap();
            assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{command} {f}");
        }
    }
}

#[test]
fn theta_outside_range_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    let mut config = trivial_config();
    config["problem"]["theta"] = json!(0.6);
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("out");
    let o = amc(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta"));
}

#[test]
fn unknown_config_key_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    let mut config = trivial_config();
    config["solver"] = json!({"max_outer_iterations": 5});
    let cfg = write_config(dir.path(), &config);
    let o = amc(&["solve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn iteration_cap_is_nonconvergence() {
    let dir = TempDir::new().unwrap();
    let mut config = fixture_config("radial_mild", 0.0625);
    config["solver"] = json!({"max_outer_iters": 1});
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("out");
    let o = amc(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(read_json(&out.join("report.json"))["status"], "nonconvergence");
}

#[test]
fn missing_config_is_invalid_and_fixture_lists() {
    assert_eq!(amc(&["solve"]).status.code(), Some(3));
    let o = amc(&["fixture"]);
    assert!(o.status.success());
    let listing = String::from_utf8_lossy(&o.stdout);
    for name in ["paraboloid", "radial", "radial_mild", "sheared", "diag"] {
        assert!(listing.contains(name));
    }
}

#[test]
fn converge_writes_orders() {
    let dir = TempDir::new().unwrap();
    let mut config = fixture_config("radial", 0.0625);
    config["converge"] = json!({"fixture": "radial", "h_list": [0.125, 0.0625]});
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("out");
    let o = amc(&["converge", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let study = read_json(&out.join("converge.json"));
    let rows = study["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["u_order"].is_null() && rows[1]["u_order"].is_number());
    let csv = std::fs::read_to_string(out.join("converge.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
