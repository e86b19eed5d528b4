use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn vimp(out: &Path, args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vimp")).arg("--out").arg(out).args(args).arg(config).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn solve_null_gives_forcing() {
    let dir = scratch("solve_null");
    let cfg = write_config(
        &dir,
        r#"{"problem": "null", "params": {"h0": 0.5, "h1": -1.0, "h2": 2.0}, "tau": [0.4], "T": 1.0, "points_per_interval": 11}"#,
    );
    let out = dir.join("out");
    let o = vimp(&out, &["solve"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("interval_index,t,side,x_1"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 22);
    for row in &rows {
        let t: f64 = row[1].parse().unwrap();
        let x: f64 = row[3].parse().unwrap();
        assert!((x - (0.5 - t + 2.0 * t * t)).abs() < 1e-14);
    }
    assert_eq!(rows[10][..3], ["1", "0.4", "left"]);
    assert_eq!(rows[11][..3], ["2", "0.4", "right"]);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["residual"], 0.0);
    assert_eq!(summary["spectral_ok"], true);
}

#[test]
fn unknown_problem_exits_2() {
    let dir = scratch("unknown");
    let cfg = write_config(&dir, r#"{"problem": "no-such-problem"}"#);
    let o = vimp(&dir.join("out"), &["solve"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    let v = stdout_json(&o);
    assert_eq!(v["kind"], "unknown_problem");
    assert!(v["error"].as_str().unwrap().contains("no-such-problem"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = scratch("malformed");
    let cfg = write_config(&dir, r#"{"problem": "null", "bogus": 1}"#);
    let o = vimp(&dir.join("out"), &["solve"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["kind"], "malformed_config");

    let cfg = write_config(&dir, r#"{"problem": "null", "policy": [[0.0]]}"#);
    let o = vimp(&dir.join("out"), &["solve"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["kind"], "invalid_policy");
}

#[test]
fn verify_exp_kernel_passes() {
    let dir = scratch("verify_exp");
    let cfg = write_config(&dir, r#"{"problem": "exp-kernel"}"#);
    let out = dir.join("out");
    let o = vimp(&out, &["verify"], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v = stdout_json(&o);
    assert_eq!(v["failures"].as_array().unwrap().len(), 0);
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for required in ["resolvent_identity", "duality", "gradient_equivalence", "finite_difference"] {
        assert!(names.contains(&required), "missing {required}");
    }
    assert!(out.join("verify.json").exists());
}

#[test]
fn ode_verify_on_lq_and_rejects_non_ode() {
    let dir = scratch("ode_verify");
    let cfg = write_config(&dir, r#"{"problem": "lq-impulsive-ode"}"#);
    let o = vimp(&dir.join("out"), &["ode-verify"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout_json(&o)["route_discrepancy"].as_f64().unwrap() <= 1e-4);

    let cfg = write_config(&dir, r#"{"problem": "exp-kernel"}"#);
    let o = vimp(&dir.join("out"), &["ode-verify"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["kind"], "not_an_ode_problem");
}

#[test]
fn check_optimality_fails_away_from_optimum() {
    let dir = scratch("check_opt");
    let cfg = write_config(&dir, r#"{"problem": "controlled-linear", "policy": [[0.0], [0.0]]}"#);
    let o = vimp(&dir.join("out"), &["check-optimality"], &cfg);
    assert_eq!(o.status.code(), Some(1));
    let v = stdout_json(&o);
    assert_eq!(v["stationarity"]["passed"], false);
    assert_eq!(v["failures"][0], "stationarity");
}

#[test]
fn optimize_reaches_enumerated_optimum() {
    let dir = scratch("optimize");
    let cfg = write_config(&dir, r#"{"problem": "controlled-linear"}"#);
    let out = dir.join("out");
    let o = vimp(&out, &["optimize", "--enumerate-grid", "21"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<Value> =
        String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    let costs: Vec<f64> = lines.iter().map(|l| l["cost"].as_f64().unwrap()).collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("optimize.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert!(summary["enumeration"]["max_distance_to_gradient_result"].as_f64().unwrap() <= 0.05);
}

#[test]
fn linear_modes_agree() {
    let dir = scratch("linear");
    let cfg = write_config(&dir, r#"{"problem": "pure-jump", "params": {"c": 1.0}}"#);
    let o = vimp(&dir.join("out"), &["linear", "--mode", "all"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert!(v["max_discrepancy"].as_f64().unwrap() <= 1e-12);
    let b = &v["modes"]["path_boundary"]["boundary_values"];
    for (i, want) in [1.0, 2.0, 4.0].iter().enumerate() {
        assert!((b[i][0].as_f64().unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = scratch("determinism");
    let cfg = write_config(&dir, r#"{"problem": "memory-decay"}"#);
    let runs: Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> = (0..2)
        .map(|k| {
            let out = dir.join(format!("out{k}"));
            assert_eq!(vimp(&out, &["solve"], &cfg).status.code(), Some(0));
            let g = vimp(&out, &["--seed", "7", "verify"], &cfg);
            (fs::read(out.join("trajectory.csv")).unwrap(), fs::read(out.join("summary.json")).unwrap(), g.stdout)
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}
