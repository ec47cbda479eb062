use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn ehjb(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehjb"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn check_benchmark_passes_with_m_two() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["check"], &config("benchmark.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(dir.path().join("conditions.json"));
    assert!((num(&rep["M"]) - 2.0).abs() < 1e-6);
    assert_eq!(rep["overall"], Value::Bool(true));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn check_expanding_drift_fails_with_witness() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["check"], &config("expanding.toml"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let rep = json(dir.path().join("conditions.json"));
    assert_eq!(rep["overall"], Value::Bool(false));
    assert!(rep["dissipativity"]["witness"]["x"].is_array());
    assert!(num(&rep["delta_hat"]) < 0.0);
}

#[test]
fn malformed_expression_names_key() {
    let dir = TempDir::new().unwrap();
    let src = fs::read_to_string(config("benchmark.toml")).unwrap().replace("cos(x)\"", "cos(x\"");
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, src).unwrap();
    let out = ehjb(&["check"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("h.expr") && err.contains("line"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let cfg = config("constant.toml");
    assert_eq!(ehjb(&["check", "--cap", "nope"], &cfg, dir.path()).status.code(), Some(2));
    assert_eq!(ehjb(&["check"], &dir.path().join("missing.toml"), dir.path()).status.code(), Some(2));
    assert_eq!(ehjb(&["solve", "--spacing", "-1"], &cfg, dir.path()).status.code(), Some(2));
    let threads = Command::new(env!("CARGO_BIN_EXE_ehjb"))
        .env("EHJB_THREADS", "zero")
        .args(["check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn solve_constant_driver() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["solve"], &config("constant.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rep = json(dir.path().join("report.json"));
    assert!((num(&rep["lambda"]) - 1.0).abs() < 1e-10);
    let u = fs::read_to_string(dir.path().join("u.csv")).unwrap();
    assert_eq!(u.lines().next(), Some("x1,u"));
    let v = fs::read_to_string(dir.path().join("v.csv")).unwrap();
    assert_eq!(v.lines().next(), Some("x1,v"));
    assert_eq!(u.lines().count(), v.lines().count());
}

#[test]
fn solve_benchmark_bound() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["solve"], &config("benchmark.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rep = json(dir.path().join("report.json"));
    assert_eq!(rep["gradient_bound"]["verdict"], Value::Bool(true));
    assert!(num(&rep["gradient_bound"]["sup_v"]) <= 2.1);
}

#[test]
fn solve_lq_forced_without_cap() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["solve", "--force", "--cap", "off"], &config("lq.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rep = json(dir.path().join("report.json"));
    assert!((num(&rep["lambda"]) - 0.5).abs() < 1e-2);
    assert!(rep["cap"].is_null());
    let manifest = json(dir.path().join("manifest.json"));
    assert_eq!(manifest["forced"], Value::Bool(true));
    assert_eq!(manifest["overrides"]["cap"], Value::String("off".into()));
}

#[test]
fn solve_two_dimensional_csv_columns() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["solve", "--spacing", "0.25"], &config("ou2d.toml"), dir.path());
    assert!(out.status.code().is_some_and(|c| c <= 1));
    let v = fs::read_to_string(dir.path().join("v.csv")).unwrap();
    assert_eq!(v.lines().next(), Some("x1,x2,v1,v2"));
    let rep = json(dir.path().join("report.json"));
    assert!((num(&rep["lambda"]) - 2.0 * (-0.25f64).exp()).abs() < 2e-2);
}

#[test]
fn reruns_are_bit_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        let out = ehjb(&["solve", "--seed", "4"], &config("benchmark.toml"), d.path());
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["manifest.json", "conditions.json", "report.json", "u.csv", "v.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let m = json(a.path().join("manifest.json"));
    assert_eq!(m["seeds"]["check"], Value::from(4));
    let hash = m["artifacts"]["u.csv"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
}

#[test]
fn forward_counterexample_skips_solve() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["forward"], &config("forward_counterexample.toml"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let rep = json(dir.path().join("forward.json"));
    assert_eq!(rep["condition"]["holds"], Value::Bool(false));
    assert!(rep["condition"]["witness"]["z_bar"].is_array());
    assert_eq!(rep["solved"], Value::Bool(false));
    assert!(!dir.path().join("u.csv").exists());

    let forced = TempDir::new().unwrap();
    let out = ehjb(&["forward", "--force"], &config("forward_counterexample.toml"), forced.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(forced.path().join("forward.json"))["solved"], Value::Bool(true));
}

#[test]
fn forward_tanh_whole_space() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["forward"], &config("forward_tanh.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rep = json(dir.path().join("forward.json"));
    assert_eq!(rep["condition"]["holds"], Value::Bool(true));
    assert!(num(&rep["gradient_check"]["result"]["max_rel_error"]) <= 1e-5);
}

#[test]
fn forward_zero_theta() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["forward"], &config("forward_zero.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rep = json(dir.path().join("forward.json"));
    assert!(num(&rep["lambda"]).abs() <= 1e-3);
    assert!(num(&rep["sup_v"]) <= 1e-3);
}

#[test]
fn control_needs_cost_section() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["control"], &config("benchmark.toml"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn control_table() {
    let dir = TempDir::new().unwrap();
    let out = ehjb(&["control"], &config("control.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let costs = json(dir.path().join("costs.json"));
    let lambda = num(&costs["lambda"]);
    assert!((num(&costs["optimal"]["estimate"]["value"]) - lambda).abs() <= 5e-2);
    assert_eq!(costs["perturbed"].as_array().unwrap().len(), 3);
    let ws = &costs["weak_strong"]["result"];
    assert!(num(&ws["diff"]).abs() <= 3.0 * num(&ws["joint_std_error"]));
    let rs = &costs["risk_sensitive"];
    assert!((num(&rs["estimate"]["value"]) - num(&rs["lambda_rs"])).abs() <= 1e-1);
    assert_eq!(rs["dx_bitwise_equal"], Value::Bool(true));
}

#[test]
fn simulate_with_path_dump() {
    let dir = TempDir::new().unwrap();
    let src = fs::read_to_string(config("benchmark.toml")).unwrap()
        + "\n[simulation]\nhorizon = 2.0\nn_paths = 4\nlambda_horizon = 200.0\nweak_paths = 2000\n";
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, src).unwrap();
    let dump = dir.path().join("paths.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_ehjb"))
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--dump-paths")
        .arg(&dump)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = fs::read_to_string(&dump).unwrap();
    assert_eq!(text.lines().next(), Some("path,step,t,x1"));
    assert_eq!(text.lines().count(), 1 + 4 * 201);
    let s = json(dir.path().join("out/paths_summary.json"));
    assert_eq!(s["bsde_ladder"]["decreasing"], Value::Bool(true));
    assert_eq!(s["ensemble"]["n_paths"], Value::from(4));
}

#[test]
fn oversized_dump_is_refused() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ehjb"))
        .args(["simulate", "--config"])
        .arg(config("benchmark.toml"))
        .arg("--out")
        .arg(dir.path())
        .arg("--dump-paths")
        .arg(dir.path().join("p.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("p.csv").exists());
}
