use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const IDENTITY: &str = "horizon = 1.0\norder = 10\n\n[model]\nmu = 1.0\nnu = 1.0\n";

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let out = dir.join("out");
    std::fs::write(&path, format!("{body}\n[output]\ndir = {:?}\n", out.to_str().unwrap())).unwrap();
    path
}

fn qkl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkl")).args(args).output().unwrap()
}

fn run(dir: &Path, body: &str, cmd: &str, extra: &[&str]) -> Output {
    let cfg = write_config(dir, body);
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    qkl(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn spectrum_rows_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), IDENTITY, "spectrum", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("trace deficit"));
    let csv = read(dir.path(), "spectrum.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,u_k,omega_k,lambda_k,gamma_k,residual_pik,residual_trans"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert!(r[5].abs() < 1e-12 && r[6].abs() < 1e-12, "{r:?}");
    }
    assert_eq!(rows[0][3], 0.7388108094164549);
}

#[test]
fn order_override_and_zero_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), IDENTITY, "spectrum", &["--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read(dir.path(), "spectrum.csv").lines().count(), 4);
    let o = run(dir.path(), IDENTITY, "spectrum", &["--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("order"));
}

#[test]
fn config_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &format!("{IDENTITY}spin = 1\n"), "spectrum", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("spin"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());

    let o = qkl(&["spectrum"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(dir.path(), IDENTITY, "qef", &["--theta", "0.5:0.1:3"]);
    assert_eq!(o.status.code(), Some(2));

    // zero coupling: not stable
    let unstable = "horizon = 1.0\norder = 4\n[model]\nenergy = [1.0, 0.0, 0.0, 1.0]\ncoupling = [0.0, 0.0, 0.0, 0.0]\n";
    let o = run(dir.path(), unstable, "spectrum", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Hurwitz") || stderr(&o).contains("stable"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_io_error() {
    let o = qkl(&["spectrum", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn qef_marks_rows_beyond_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), IDENTITY, "qef", &["--theta", "0.1,0.5,2.0,3.0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = read(dir.path(), "qef.csv");
    let status: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(status, ["ok", "ok", "RadiusExceeded", "RadiusExceeded"]);

    let report: Value = serde_json::from_str(&read(dir.path(), "qef.json")).unwrap();
    let series = &report["largest_admissible"];
    assert_eq!(series["theta"], 0.5);
    assert_eq!(series["increments"].as_array().unwrap().len(), 10);
    assert!(report["rows"][2]["log_Xi_N"].is_null());
}

#[test]
fn small_theta_rows_converge() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), IDENTITY, "qef", &["--theta", "1e-7:1e-6:4:log"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = read(dir.path(), "qef.csv");
    for line in csv.lines().skip(1) {
        assert!(line.ends_with("true,ok"), "{line}");
    }
}

#[test]
fn sweep_covers_every_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), IDENTITY, "sweep", &["--theta", "0.1,0.2", "--n", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = read(dir.path(), "sweep.csv");
    assert_eq!(csv.lines().next().unwrap(), "theta,N,r_N,log_Xi_N,converged");
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
}

#[test]
fn covariance_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), IDENTITY, "covariance", &["--n", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(read(dir.path(), "covariance.txt").contains("# coefficient covariance P_N (10x10)"));
    assert_eq!(read(dir.path(), "block_norms.csv").lines().count(), 26);
}

#[test]
fn verify_passes_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), IDENTITY, "verify", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: Value = serde_json::from_str(&read(dir.path(), "verify.json")).unwrap();
    assert_eq!(report["passed"], true);
    for check in report["checks"].as_array().unwrap() {
        for key in ["name", "value", "reference", "tolerance", "passed"] {
            assert!(check.get(key).is_some(), "{key} missing in {check}");
        }
    }
}

#[test]
fn verify_fails_with_degraded_quadrature() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{IDENTITY}[quadrature]\nnodes_per_panel = 2\n[verify]\nnystrom_grid = 500\n");
    let o = run(dir.path(), &body, "verify", &[]);
    assert_eq!(o.status.code(), Some(4));
    let report: Value = serde_json::from_str(&read(dir.path(), "verify.json")).unwrap();
    let gram = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "spectrum.gram_orthonormality")
        .unwrap();
    assert_eq!(gram["passed"], false);
}
