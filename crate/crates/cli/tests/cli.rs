use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nilsys(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nilsys"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn heisenberg_with(drift: &str, omega: &str) -> String {
    format!(
        "dim = 3\nbrackets = [[1, 2, 3, 1.0]]\ndrift = {drift}\ncontrols = [[1.0, 1.0, 0.0]]\nomega = {omega}\n"
    )
}

#[test]
fn validate_passes_on_bundled_configs() {
    for name in ["r2", "heisenberg", "heisenberg-full", "filiform4", "torus-heisenberg"] {
        let cfg = configs().join(format!("{name}.toml"));
        let o = nilsys(&["validate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        assert!(!stdout(&o).contains("FAIL"));
    }
}

#[test]
fn validate_reports_non_derivation_residual() {
    let dir = TempDir::new().unwrap();
    let body = heisenberg_with("[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]", "[[-1.0, 1.0]]");
    let cfg = write_config(&dir, "bad.toml", &body);
    let o = nilsys(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL drift is a derivation: residual 1.000e0"), "{out}");
}

#[test]
fn omega_without_zero_is_rejected() {
    let dir = TempDir::new().unwrap();
    let body = heisenberg_with("[[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]]", "[[0.5, 1.0]]");
    let cfg = write_config(&dir, "omega.toml", &body);
    let o = nilsys(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL control box contains 0"));
    let o = nilsys(&["perset", "--config", &cfg, "--budget", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_is_a_config_error_with_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "broken.toml", "dim = 3\nbrackets = [[1, 2\n");
    let o = nilsys(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn decompose_splits_drifts() {
    let r2 = configs().join("r2.toml");
    let o = nilsys(&["decompose", "--config", r2.to_str().unwrap()]);
    assert!(stdout(&o).contains("dim g+ = 1, dim g0 = 0, dim g- = 1"));
    let dir = TempDir::new().unwrap();
    let zero = heisenberg_with("[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]", "[[-1.0, 1.0]]");
    let cfg = write_config(&dir, "zero.toml", &zero);
    let out = dir.path().join("out");
    let o = nilsys(&["decompose", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("dim g+ = 0, dim g0 = 3, dim g- = 0"));
    let csv = fs::read_to_string(out.join("bases.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("zero,")).count(), 3);
}

#[test]
fn simulate_writes_trajectory_with_provenance() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("heisenberg.toml");
    let out = dir.path().join("sim");
    let o = nilsys(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--control=1",
        "--t-max",
        "1",
        "--step",
        "0.01",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_sha256="));
    assert_eq!(lines[1], "# seed=0");
    assert_eq!(lines[2], "t,x1,x2,x3");
    assert_eq!(lines.len(), 3 + 101);
    let last: Vec<f64> = lines[lines.len() - 1].split(',').map(|v| v.parse().unwrap()).collect();
    let e = std::f64::consts::E;
    assert!((last[1] - (e - 1.0)).abs() < 1e-8);
    assert!((last[2] - (1.0 - 1.0 / e)).abs() < 1e-8);
    assert!(out.join("trajectory.svg").exists());
}

#[test]
fn perset_is_reproducible_and_classifies_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("r2.toml");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = nilsys(&[
            "perset",
            "--config",
            cfg.to_str().unwrap(),
            "--f",
            "identity",
            "--budget",
            "1000",
            "--seed",
            "3",
            "--grid=-1.5,1.5,31",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["points.csv", "grid.csv", "points.svg", "grid.svg", "report.txt"] {
        let fa = fs::read(a.join(f)).unwrap();
        assert_eq!(fa, fs::read(b.join(f)).unwrap(), "{f}");
    }
    let grid = fs::read_to_string(a.join("grid.csv")).unwrap();
    let mut inside = 0;
    for line in grid.lines().skip(3) {
        let parts: Vec<&str> = line.split(',').collect();
        let (x, y): (f64, f64) = (parts[0].parse().unwrap(), parts[1].parse().unwrap());
        if parts[2] == "in" {
            inside += 1;
            assert!(x.abs() < 1.0 + 0.1 && y.abs() < 1.0 + 0.1, "{line}");
        }
    }
    assert!(inside > 200);
}

#[test]
fn zero_budget_gives_empty_estimate_with_diagnostic() {
    let cfg = configs().join("r2.toml");
    let o = nilsys(&["controlset", "--config", cfg.to_str().unwrap(), "--budget", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("points 0"));
    assert!(out.contains("diagnostic"));
}

#[test]
fn reach_keeps_y_inside_unit_interval() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("r2.toml");
    let out = dir.path().join("reach");
    let o = nilsys(&[
        "reach",
        "--config",
        cfg.to_str().unwrap(),
        "--budget",
        "200",
        "--explore",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let pts = fs::read_to_string(out.join("points.csv")).unwrap();
    for line in pts.lines().skip(3) {
        let y: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(y.abs() < 1.0);
    }
}

#[test]
fn unknown_example_is_rejected() {
    let o = nilsys(&["verify-example", "sl2"]);
    assert_eq!(o.status.code(), Some(2));
}
