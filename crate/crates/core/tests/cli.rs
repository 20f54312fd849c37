//! End-to-end runs of the `agewave` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agewave::manifest::{sha256_hex, RunManifest};
use serde_json::Value;
use tempfile::TempDir;

const R1: &str = r#"
[model]
a_max = 1.0
n_a = 101
mu = 0.0
beta = 1.0
transmission = 1.0

[kernel]
family = "gaussian"
sigma = 1.0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agewave"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn agewave(args: &[&str], cfg: &Path, out: &Path) -> Output {
    let mut cmd = bin();
    cmd.arg(args[0]).arg(cfg).args(&args[1..]).arg("--out").arg(out);
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_reference_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r1.toml", R1);
    let out = dir.path().join("out");
    let o = agewave(&["validate"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(out.join("validate.json"));
    assert!(report["items"].as_array().unwrap().iter().all(|c| c["passed"] == Value::Bool(true)));
}

#[test]
fn speed_reports_closed_form_values() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r1.toml", R1);
    let out = dir.path().join("out");
    let o = agewave(&["speed"], &cfg, &out);
    assert_eq!(code(&o), 0);
    let v = json(out.join("speed.json"));
    assert!((v["s0"].as_f64().unwrap() + 1.0).abs() < 1e-8);
    assert!((v["c_star"].as_f64().unwrap() - 1.648721).abs() < 1e-5);
    assert_eq!(v["phi"].as_array().unwrap().len(), 101);

    let csv = std::fs::read_to_string(out.join("dispersion.csv")).unwrap();
    assert!(csv.starts_with("c,lambda1,lambda2,lambda_of_c,big_lambda_at_tangency\n"));

    // every output is listed with its hash, and the manifest round-trips
    let m = manifest(&out);
    assert_eq!(m.command, "speed");
    assert_eq!(m.config_sha256, sha256_hex(R1.as_bytes()));
    let mut listed: Vec<String> = m.outputs.iter().map(|f| f.path.display().to_string()).collect();
    listed.sort();
    assert_eq!(listed, ["dispersion.csv", "speed.json"]);
    for f in &m.outputs {
        assert_eq!(sha256_hex(&std::fs::read(out.join(&f.path)).unwrap()), f.sha256);
    }
    let again: RunManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(again, m);
}

#[test]
fn asymmetric_kernel_fails_validation() {
    let dir = TempDir::new().unwrap();
    let mut table = String::from("y,J\n");
    for k in 0..=100 {
        let y = k as f64 * 0.1;
        table.push_str(&format!("{y},{}\n", (-y).exp()));
    }
    std::fs::write(dir.path().join("one_sided.csv"), table).unwrap();
    let text = R1.replace("family = \"gaussian\"\nsigma = 1.0", "family = \"tabulated\"\nfile = \"one_sided.csv\"");
    let cfg = write_config(dir.path(), "skew.toml", &text);
    let o = agewave(&["speed"], &cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_and_io_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r1.toml", R1);
    let out = dir.path().join("out");
    assert_eq!(code(&agewave(&["speed", "--no-such-flag"], &cfg, &out)), 1);
    assert_eq!(code(&bin().arg("launch").output().unwrap()), 1);
    assert_eq!(code(&agewave(&["speed"], &dir.path().join("missing.toml"), &out)), 4);
    let typo = write_config(dir.path(), "typo.toml", &R1.replace("sigma = 1.0", "sigma = 1.0\nsigmma = 2.0"));
    assert_eq!(code(&agewave(&["speed"], &typo, &out)), 2);
    assert_eq!(code(&agewave(&["simulate", "--dt", "0.02"], &cfg, &out)), 2);
}

#[test]
fn manifest_only_computes_nothing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r1.toml", R1);
    let out = dir.path().join("out");
    let o = agewave(&["wave", "--manifest-only", "--c", "2.0"], &cfg, &out);
    assert_eq!(code(&o), 0);
    let m = manifest(&out);
    assert!(m.dry_run && m.outputs.is_empty());
    assert_eq!(m.config["wave"]["c"], 2.0);
    let files: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
    assert_eq!(files.len(), 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r1.toml", &R1.replace("n_a = 101", "n_a = 11"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = agewave(&["simulate", "--T", "0.5", "--snapshots", "0,0.5"], &cfg, out);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["snapshot_000.csv", "snapshot_001.csv"] {
        let (x, y) = (std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
    let body = std::fs::read_to_string(a.join("snapshot_001.csv")).unwrap();
    assert!(body.starts_with("a,x,u\n"));
    assert!(body.lines().nth(1).unwrap().split(',').all(|v| v.contains('e')));
}

#[test]
fn sweep_over_transmission_and_width() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r1.toml", R1);
    let out = dir.path().join("out");
    let o = agewave(&["sweep", "--kappa-scale", "1,2", "--sigma", "1,2"], &cfg, &out);
    assert_eq!(code(&o), 0);
    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    let num = |r: &csv::StringRecord, i: usize| r[i].parse::<f64>().unwrap();
    for r in &rows {
        assert_eq!(&r[6], "ok");
        assert!((num(r, 3) + num(r, 0)).abs() < 1e-8, "s0 = -kappa");
    }
    // rows are ordered kappa-major, then sigma
    assert!(num(&rows[1], 4) > num(&rows[0], 4));
    assert!(num(&rows[2], 4) > num(&rows[0], 4));
    assert_eq!(manifest(&out).checks["kappa_monotone"], 1.0);
}

#[test]
fn empty_sweep_writes_the_header() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r1.toml", R1);
    let out = dir.path().join("out");
    assert_eq!(code(&agewave(&["sweep"], &cfg, &out)), 0);
    assert_eq!(
        std::fs::read_to_string(out.join("sweep.csv")).unwrap(),
        "kappa_scale,sigma,a_max,s0,c_star,lambda_star,status\n"
    );
}

#[test]
fn thread_count_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "r1.toml", R1);
    let out = dir.path().join("out");
    let o = bin().env("AGEWAVE_THREADS", "2").arg("speed").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(manifest(&out).threads, 2);
    let o = bin().env("AGEWAVE_THREADS", "many").arg("speed").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn spread_hair_trigger_verdict() {
    let dir = TempDir::new().unwrap();
    let text = format!("{}\n[spread]\ndomain = 20.0\nn_x = 401\n", R1.replace("n_a = 101", "n_a = 21"));
    let cfg = write_config(dir.path(), "r1.toml", &text);
    let out = dir.path().join("out");
    let o = agewave(&["spread", "--experiment", "hair", "--T", "15"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(out.join("spread.json"));
    assert_eq!(v["passed"], true);
    assert!(v["t_elapsed"].as_f64().unwrap() > 0.0);
}
