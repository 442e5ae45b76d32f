use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pdmp-fv"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn report_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("report.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")).map(str::to_string))
        .unwrap_or_else(|| panic!("{key} missing"))
}

#[test]
fn tcp_fj_run_writes_density_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fj");
    let o = run(&[
        "run",
        "--model",
        "tcp-fj",
        "--h",
        "0.1",
        "--tau",
        "0.1",
        "--dt",
        "0.1",
        "--T",
        "10",
        "--particles",
        "20000",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let density = fs::read_to_string(out.join("density.csv")).unwrap();
    let mut lines = density.lines();
    assert_eq!(lines.next(), Some("t,cell_center,density"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20);
    assert!(rows
        .iter()
        .all(|r| r[0] == 10.0 && r[1] > 0.0 && r[1] < 2.0 && r[2] >= 0.0));
    assert!(out.join("comparison.csv").exists());
    assert!(out.join("mc_hits.csv").exists());
    assert_eq!(report_value(&out, "status"), "ok");
    assert_eq!(report_value(&out, "steps"), "100");
    let l1: f64 = report_value(&out, "mc_l1_distance").parse().unwrap();
    assert!(l1 < 0.2);
}

#[test]
fn identical_config_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        r#"
seed = 9
horizon = 3.0
snapshots = [1.0, 2.0]
export_measures = true

[model]
name = "tcp-f"

[mesh]
h = 0.05

[scheme]
tau = 0.05
dt = 0.05
method = "fixed-point"

[mc]
particles = 5000
"#,
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "density.csv",
        "sigma.csv",
        "mu_atoms.csv",
        "sigma_atoms.csv",
        "residual.csv",
        "mc_histogram.csv",
        "mc_hits.csv",
        "comparison.csv",
        "report.txt",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let density = fs::read_to_string(a.join("density.csv")).unwrap();
    assert_eq!(density.lines().count(), 1 + 3 * 40);
}

#[test]
fn nonpositive_dt_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        "--dt",
        "0",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("scheme.dt"));
    let o = run(&[
        "run",
        "--dt",
        "-0.1",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

#[test]
fn config_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(
        &config,
        "horizon = 1.0\n[model]\nname = \"tcp-fj\"\n[mesh]\nh = \n",
    )
    .unwrap();
    let o = run(&["run", "--config", config.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 5"));
}

#[test]
fn figure1_preset_emits_one_density_per_set() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        "--preset",
        "figure1",
        "--model",
        "tcp-fj",
        "--T",
        "0.5",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for label in [
        "h0.2_tau0.2_dt0.2",
        "h0.1_tau0.1_dt0.1",
        "h0.01_tau0.01_dt0.01",
        "h0.01_tau0.005_dt0.01",
    ] {
        let sub = dir.path().join(label);
        assert!(sub.join("density.csv").exists(), "{label}");
        assert_eq!(report_value(&sub, "status"), "ok");
    }
    let fine = dir.path().join("h0.01_tau0.005_dt0.01");
    assert_eq!(report_value(&fine, "tau"), "5.0000000000000001e-3");
}

#[test]
fn fixed_point_budget_exhaustion_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tight.toml");
    fs::write(
        &config,
        "horizon = 1.0\n[model]\nname = \"tcp-fj\"\n[mesh]\nh = 0.1\n[scheme]\ntau = 0.1\ndt = 0.1\nmethod = \"fixed-point\"\nmax_fixed_point_iterations = 1\n",
    )
    .unwrap();
    let o = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

#[test]
fn audit_prints_certificate() {
    let o = run(&["audit", "--model", "tcp-fj"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("exponential_boundary_condition: true"));
    assert!(text.contains("certificate_b0: 1.0000000000000000e0"));
}

#[test]
fn refine_reports_decreasing_residuals() {
    let o = run(&["refine", "--model", "tcp-fj", "--T", "4"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("h,tau,dt,residual\n"));
    assert!(text.contains("strictly_decreasing: true"));
}
