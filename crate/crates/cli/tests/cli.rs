use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn freepole(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freepole"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const LORENTZIAN: &str = r#"
[spectrum]
model = "lorentzian"
amplitude = 1.0
center = 0.5
width = 0.8

[domain]
lo = 1e-3
hi = 1e3
points_per_decade = 40

[fit]
delta = 1e-12
"#;

const RABI: &str = r#"
[system]
epsilon = 0.0
delta_x = 1.0

[truncation]
depth = 2

[propagation]
dt = 0.005
t_final = 5.0
stride = 10
"#;

const DECOUPLED: &str = "index,re_d,im_d,gamma,omega\n1,0,0,1.0,0.5\n";

fn manifest(dir: &Path) -> toml::Value {
    toml::from_str(&fs::read_to_string(dir.join("manifest.toml")).unwrap()).unwrap()
}

fn assert_hashes(dir: &Path) {
    let m = manifest(dir);
    let artifacts = m["artifacts"].as_table().unwrap();
    assert!(!artifacts.is_empty());
    for (name, hash) in artifacts {
        let digest = hex::encode(Sha256::digest(fs::read(dir.join(name)).unwrap()));
        assert_eq!(hash.as_str().unwrap(), digest, "{name}");
    }
}

#[test]
fn fit_lorentzian_gives_one_mode() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "fit.toml", LORENTZIAN);
    let out = tmp.path().join("out");
    let o = freepole(&["fit", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("K = 1"));
    assert_eq!(manifest(&out)["results"]["modes"].as_integer(), Some(1));
    assert_hashes(&out);
    let dec = fs::read_to_string(out.join("decomposition.csv")).unwrap();
    assert!(dec.lines().any(|l| l == "index,re_d,im_d,gamma,omega"));
}

#[test]
fn malformed_config_reports_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[fit]\ndelta = 1e-8\ncolour = \"red\"\n");
    let o = freepole(&["fit", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("colour"), "{err}");
}

#[test]
fn fit_non_convergence_writes_best_effort_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "fit.toml", "[fit]\ndelta = 1e-10\nmax_iterations = 4\n");
    let out = tmp.path().join("out");
    let o = freepole(&["fit", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("poles.csv").exists());
    assert!(manifest(&out)["status"].as_str().unwrap().starts_with("non-converged"));
    assert_hashes(&out);
}

#[test]
fn decoupled_propagation_is_rabi_and_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "run.toml", RABI);
    let dec = write(tmp.path(), "dec.csv", DECOUPLED);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = freepole(&["--threads", "1", "propagate", s(&cfg), s(&dec), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_hashes(out);
    }
    let text = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("trajectory.csv")).unwrap());

    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|c| *c == "sigma_z").unwrap();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows[0][col], 1.0);
    for r in &rows {
        assert!((r[col] - (2.0 * r[0]).cos()).abs() < 1e-8);
    }
    let m = manifest(&a);
    assert_eq!(m["results"]["depth"].as_integer(), Some(2));
    assert_eq!(m["results"]["modes"].as_integer(), Some(1));

    let report = tmp.path().join("report");
    let o = freepole(&[
        "analyze",
        s(&a.join("trajectory.csv")),
        s(&cfg),
        "--kind",
        "localization",
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: toml::Value = toml::from_str(&fs::read_to_string(report.join("report.toml")).unwrap()).unwrap();
    assert!(r["mean_sigma_z"].as_float().is_some());
    assert_hashes(&report);
}

#[test]
fn oversized_hierarchy_is_refused() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "run.toml", "[truncation]\ndepth = 20\n");
    let rows: String = (1..=10).map(|k| format!("{k},0.01,0,{k}.0,0\n")).collect();
    let dec = write(tmp.path(), "dec.csv", &format!("index,re_d,im_d,gamma,omega\n{rows}"));
    let out = tmp.path().join("out");
    let o = freepole(&["propagate", s(&cfg), s(&dec), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exceeds the budget"));
    assert!(manifest(&out)["results"]["estimated_ados"].as_str().is_some());
}

#[test]
fn divergence_exits_with_time() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "run.toml",
        "[truncation]\ndepth = 1\n\n[propagation]\ndt = 0.01\nt_final = 5.0\nintegrator = \"rk4\"\n",
    );
    let dec = write(tmp.path(), "dec.csv", "index,re_d,im_d,gamma,omega\n1,1.0,0,400.0,0\n");
    let out = tmp.path().join("out");
    let o = freepole(&["propagate", s(&cfg), s(&dec), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(manifest(&out)["results"]["divergence_time"].as_float().unwrap() > 0.0);
}

#[test]
fn verify_golden_table_and_unknown_suite() {
    let o = freepole(&["verify", "golden-table"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    let o = freepole(&["verify", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown suite"));
}

#[test]
fn scan_writes_mode_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "scan.toml", "[fit]\nscan_deltas = [1e-4, 1e-3, 1e-5]\n");
    let out = tmp.path().join("out");
    let o = freepole(&["scan", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("scan.csv")).unwrap();
    let ks: Vec<u32> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("delta"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ks.len(), 3);
    assert!(ks.windows(2).all(|w| w[1] >= w[0]));
    assert_hashes(&out);
}
