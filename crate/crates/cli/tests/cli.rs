use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn fkdv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkdv"))
        .args(args)
        .env_remove("FKDV_THREADS")
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, config: Option<&Path>, out: &Path) -> Output {
    let mut args = vec![cmd.to_string()];
    if let Some(c) = config {
        args.push("--config".into());
        args.push(c.display().to_string());
    }
    args.push("--out".into());
    args.push(out.display().to_string());
    args.push("--quiet".into());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    fkdv(&args)
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

const SOLITON: &str = r#"
[model]
a = 1.0
dim = 1
nonlinearities = [{ k = 2, nu = 1 }]

[grid]
n = 1024
half_length = 60.0

[stepper]
dt = 1e-3
t_end = 1.0
dealias_fraction = 1.0
record_every = 100

[data]
kind = "bo_soliton"
c = 1.0
"#;

#[test]
fn evolve_soliton_conserves_i2_and_hashes_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "soliton.toml", SOLITON);
    let out = dir.path().join("out");
    let res = run("evolve", Some(&cfg), &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let i2 = csv_column(&out.join("diagnostics.csv"), "I2");
    assert_eq!(i2.len(), 11);
    let drift = i2.iter().map(|v| (v - i2[0]).abs() / i2[0]).fold(0.0, f64::max);
    assert!(drift < 1e-6, "{drift}");
    let m = manifest(&out);
    assert_eq!(m["status"], "success");
    assert_eq!(m["command"], "evolve");
    let expected = hex::encode(Sha256::digest(SOLITON.as_bytes()));
    assert_eq!(m["config_sha256"], expected.as_str());
    let bytes = fs::read(out.join("final_state.bin")).unwrap();
    assert_eq!(bytes.len(), 40 + 8 * 1024);
    assert_eq!(&bytes[..8], b"FKDVSNAP");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = SOLITON.replace("t_end = 1.0", "t_end = 0.2").replace("record_every = 100", "record_every = 20");
    let cfg = write_config(dir.path(), "soliton.toml", &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("evolve", Some(&cfg), &a).status.code(), Some(0));
    assert_eq!(run("evolve", Some(&cfg), &b).status.code(), Some(0));
    for name in ["diagnostics.csv", "final_state.bin"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn missing_key_is_named_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SOLITON.replace("a = 1.0\n", ""));
    let out = dir.path().join("out");
    let res = run("evolve", Some(&cfg), &out);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("model.a"));
    let m = manifest(&out);
    assert_eq!(m["status"], "config_error");
    assert!(m["message"].as_str().unwrap().contains("model.a"));
}

#[test]
fn unknown_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SOLITON.replace("dt = 1e-3", "dt = 1e-3\ndtt = 1"));
    assert_eq!(run("evolve", Some(&cfg), &dir.path().join("out")).status.code(), Some(1));
}

#[test]
fn missing_config_flag_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run("evolve", None, &out).status.code(), Some(1));
    assert_eq!(manifest(&out)["status"], "config_error");
}

#[test]
fn blow_up_exits_two_with_time_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[model]
a = 1.0
dim = 1
nonlinearities = [{ k = 5, nu = 1 }]

[grid]
n = 512
half_length = 20.0

[stepper]
dt = 1e-3
t_end = 2.0
record_every = 10

[data]
kind = "gaussian"
width = 1.0
amplitude = 4.0
"#;
    let cfg = write_config(dir.path(), "blowup.toml", text);
    let out = dir.path().join("out");
    let res = run("evolve", Some(&cfg), &out);
    assert_eq!(res.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m["status"], "blow_up");
    let t = m["blow_up_time"].as_f64().unwrap();
    assert!(t > 0.0 && t < 2.0);
    assert!(!out.join("final_state.bin").exists());
    assert!(out.join("diagnostics.csv").exists());
}

#[test]
fn groundstate_matches_bo_profile() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
c = 1.0

[model]
a = 1.0
dim = 1
nonlinearities = [{ k = 2, nu = 1 }]

[grid]
n = 8192
half_length = 628.3185307179586
"#;
    let cfg = write_config(dir.path(), "gs.toml", text);
    let out = dir.path().join("out");
    let res = run("groundstate", Some(&cfg), &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let x = csv_column(&out.join("profile.csv"), "x");
    let q = csv_column(&out.join("profile.csv"), "Q");
    let err = x
        .iter()
        .zip(&q)
        .map(|(x, q)| (q - 4.0 / (1.0 + x * x)).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    assert!(out.join("profile.bin").exists());
}

#[test]
fn groundstate_snapshot_feeds_evolve() {
    let dir = tempfile::tempdir().unwrap();
    let gs = r#"
c = 1.0

[model]
a = 2.0
dim = 1
nonlinearities = [{ k = 2, nu = 1 }]

[grid]
n = 256
half_length = 40.0
"#;
    let cfg = write_config(dir.path(), "gs.toml", gs);
    let gs_out = dir.path().join("gs");
    assert_eq!(run("groundstate", Some(&cfg), &gs_out).status.code(), Some(0));
    let ev = format!(
        r#"
[model]
a = 2.0
dim = 1
nonlinearities = [{{ k = 2, nu = 1 }}]

[grid]
n = 256
half_length = 40.0

[stepper]
dt = 1e-3
t_end = 0.1

[data]
kind = "file"
path = "{}"
"#,
        gs_out.join("profile.bin").display()
    );
    let cfg = write_config(dir.path(), "ev.toml", &ev);
    let res = run("evolve", Some(&cfg), &dir.path().join("ev"));
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn linear_writes_norm_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
times = [0.0, 1.0, 2.0]
weights = [0.0, 1.0]

[model]
a = 1.0
dim = 1

[grid]
n = 1024
half_length = 64.0

[data]
kind = "gaussian"
width = 1.0
amplitude = 1.0
"#;
    let cfg = write_config(dir.path(), "lin.toml", text);
    let out = dir.path().join("out");
    assert_eq!(run("linear", Some(&cfg), &out).status.code(), Some(0));
    let l2 = csv_column(&out.join("linear.csv"), "L2");
    assert_eq!(l2.len(), 3);
    for v in &l2 {
        assert!((v - l2[0]).abs() < 1e-12 * l2[0]);
    }
    let w1 = csv_column(&out.join("linear.csv"), "w_1");
    assert!(w1[2] > w1[1] && w1[1] > w1[0]);
}

#[test]
fn scenario_tstar_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = fkdv(&["scenario", "run_tstar", "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let m = manifest(&out);
    assert_eq!(m["scenario"], "run_tstar");
    assert!(m["config_sha256"].is_null());
    assert!(out.join("diagnostics.csv").exists() && out.join("plot.csv").exists());
}

#[test]
fn failing_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "strict.toml", "[thresholds]\ntstar_tol = 1e-9\n");
    let out = dir.path().join("out");
    let res = fkdv(&[
        "scenario",
        "tstar",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(manifest(&out)["status"], "failed");
}

#[test]
fn unknown_scenario_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = fkdv(&["scenario", "nope", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    for name in ["linear_growth", "moment_dichotomy", "persistence", "tstar", "symbol_bound", "combined"] {
        assert!(err.contains(name), "{err}");
    }
}
