use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqstop"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn eqstop")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn put_config() -> String {
    repo("configs/put_hyperbolic.json").display().to_string()
}

fn assert_valid(report: &Value) {
    let schema = read_json(&repo("schema/report.schema.json"));
    let v = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = v.iter_errors(report).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn classify_put_threshold_region_is_weak() {
    let dir = TempDir::new().unwrap();
    let o = run(&["classify", "--config", &put_config()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["is_weak"], true);
    assert_eq!(r["is_mild"], true);
    assert_eq!(r["verdicts"]["strong"], "certified_strong");
    assert!(r["meta"]["version"].is_string());
    assert_valid(&r);

    let csv = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(csv.starts_with("x,f,J,gap,vx_left,vx_right,lv_left,lv_right\n"));
    assert!(!csv.contains('\r'));
    assert!(csv.lines().count() > 10);
}

#[test]
fn non_equilibrium_still_exits_zero() {
    let dir = TempDir::new().unwrap();
    let o = run(&["classify", "--config", &put_config(), "--set", r#"region.pieces=[["0", 0.4]]"#], dir.path());
    assert_eq!(code(&o), 0);
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["is_mild"], false);
    assert_valid(&r);
}

#[test]
fn reruns_are_byte_identical_without_meta() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        let o = run(&["classify", "--config", &put_config(), "--no-meta"], d.path());
        assert_eq!(code(&o), 0);
    }
    for f in ["report.json", "profile.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    assert!(read_json(&a.path().join("report.json")).get("meta").is_none());
}

#[test]
fn open_pieces_exit_2() {
    let dir = TempDir::new().unwrap();
    let o = run(&["classify", "--config", &put_config(), "--set", r#"region.pieces=["(0, 1)", "(1, 2)"]"#], dir.path());
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn missing_discount_exit_1() {
    let dir = TempDir::new().unwrap();
    let mut cfg = read_json(&repo("configs/put_hyperbolic.json"));
    cfg.as_object_mut().unwrap().remove("discount");
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = run(&["classify", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("discount"));
}

#[test]
fn unknown_override_key_exit_1() {
    let dir = TempDir::new().unwrap();
    let o = run(&["classify", "--config", &put_config(), "--set", "payoff.params.strike=2"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn solve_threshold_writes_region_and_report() {
    let dir = TempDir::new().unwrap();
    let o = run(&["solve-threshold", "--config", &put_config(), "--no-meta"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_json(&dir.path().join("threshold.json"));
    let a = t["threshold"]["parameters"][0].as_f64().unwrap();
    let (lambda, _) = eqstop::equilibrium::lambda_nu(0.05, 0.3, 0.1);
    assert!((a - lambda / (1.0 + lambda)).abs() < 1e-8, "{a}");
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["is_weak"], true);
    assert_valid(&r);
}

#[test]
fn solve_threshold_without_sign_change_exit_3() {
    let dir = TempDir::new().unwrap();
    let o = run(&["solve-threshold", "--config", &put_config(), "--set", "threshold.bracket=[0.1,0.2]"], dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn mc_check_flags_profitable_deviation() {
    let dir = TempDir::new().unwrap();
    let cfg = repo("configs/capped_identity_deviation.json").display().to_string();
    let o = run(&["mc-check", "--config", &cfg, "--no-meta", "--set", "mc.paths=20000"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = read_json(&dir.path().join("mc.json"));
    let checks = doc["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3);
    for c in checks {
        assert!(c["estimate"]["mean"].as_f64().unwrap() > 0.0);
        assert!(c["z"].as_f64().unwrap() >= 3.0);
    }
}

#[test]
fn mc_check_local_time_within_three_se_and_repeatable() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = repo("configs/bm_local_time.json").display().to_string();
    let args = ["mc-check", "--config", &cfg, "--no-meta", "--seed", "7", "--set", "mc.paths=50000", "--set",
        r#"mc_checks=[{"kind":"local_time","x0":0.0,"h":1.0,"eps":0.001}]"#];
    for d in [&a, &b] {
        let o = run(&args, d.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let x = std::fs::read(a.path().join("mc.json")).unwrap();
    assert_eq!(x, std::fs::read(b.path().join("mc.json")).unwrap());
    let doc: Value = serde_json::from_slice(&x).unwrap();
    assert_eq!(doc["seed"], 7);
    let c = &doc["checks"][0];
    assert!(c["z"].as_f64().unwrap().abs() <= 3.0, "{c}");
    assert_eq!(c["passed"], true);
}

#[test]
fn format_json_skips_csv() {
    let dir = TempDir::new().unwrap();
    let o = run(&["classify", "--config", &put_config(), "--format", "json"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("report.json").exists());
    assert!(!dir.path().join("profile.csv").exists());
}

#[test]
fn reproduce_single_example_without_simulation() {
    let dir = TempDir::new().unwrap();
    let o = run(&["reproduce", "--example", "ex63", "--no-mc", "--no-meta"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let doc = read_json(&dir.path().join("reproduce.json"));
    assert_eq!(doc["all_match"], true);
    assert_eq!(doc["examples"][0]["candidates"].as_array().unwrap().len(), 7);
    assert!(dir.path().join("ex63_candidate00.csv").exists());
}

#[test]
fn info_prints_summary() {
    let dir = TempDir::new().unwrap();
    let o = run(&["info", "--config", &put_config()], dir.path());
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["instance"]["diffusion"]["kind"], "geometric_brownian_motion");
}
