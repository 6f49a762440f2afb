use std::path::Path;
use std::process::{Command, Output};

fn gpolymer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpolymer"))
        .args(args)
        .env_remove("GPOLY_SEED")
        .env_remove("GPOLY_THREADS")
        .env_remove("GPOLY_OUT")
        .env_remove("GPOLY_FORMAT")
        .env_remove("GPOLY_CONFIG")
        .output()
        .unwrap()
}

fn manifest(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{name}.manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn minimal_kernel_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "experiment = \"check-pnstar\"\n[params]\nmax_time = 64\nab_horizon = 64\n").unwrap();
    let out = dir.path().join("out");
    let o = gpolymer(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out, "check-pnstar");
    assert_eq!(m["pass"], true);
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let csv = std::fs::read_to_string(out.join("check-pnstar.csv")).unwrap();
    assert!(csv.starts_with("# experiment = check-pnstar\n"));
    assert!(csv.contains("\nn,pstar,bound,ratio,pass\n"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 65);
    let digest = m["outputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}

#[test]
fn supercritical_beta_is_a_config_error() {
    let o = gpolymer(&["moment-exact", "--t", "3", "--beta-hat", "1.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("subcritical window"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "experiment = \"un\"\n[tolerances]\nrelative = 1e-9\n").unwrap();
    let o = gpolymer(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stochastic_experiment_needs_seed() {
    let o = gpolymer(&["erdos-taylor", "--n", "100", "--samples", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn capacity_error_exit_code() {
    let o = gpolymer(&["un", "--m", "300000", "--n", "300000"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn seed_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_gpolymer"))
        .args(["erdos-taylor", "--n", "100", "--samples", "50"])
        .env("GPOLY_SEED", "9")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("# seed = 9\n"));
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = gpolymer(&[
        "moment-mc", "--q", "3", "--n", "64", "--samples", "500", "--seed", "4", "--threads", "2", "--out",
        a.to_str().unwrap(),
    ]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
    let man = a.join("moment-mc.manifest.json");
    let o = gpolymer(&["--config", man.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
    let x = std::fs::read(a.join("moment-mc.csv")).unwrap();
    let y = std::fs::read(b.join("moment-mc.csv")).unwrap();
    assert_eq!(x, y);
    assert_eq!(manifest(&a, "moment-mc")["outputs"], manifest(&b, "moment-mc")["outputs"]);
}

#[test]
fn json_format_and_max_bound() {
    let o = gpolymer(&["max-bound", "--gamma", "0.04", "--beta-hat", "0.5", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let delta: f64 = v["rows"][0]["delta_star"].as_str().unwrap().parse().unwrap();
    let expect = 2.0 * (0.04 * (4.0f64 / 3.0).ln()).sqrt();
    assert!((delta - expect).abs() < 1e-15);
}

#[test]
fn diagram_checks_report() {
    let o = gpolymer(&["diagrams", "--q", "3", "--m", "4", "--l", "3", "--check", "counts"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("\ncounts,true,"));
    let o = gpolymer(&["diagrams", "--check", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn khas_modes() {
    for mode in ["mod", "thm", "cor"] {
        let o = gpolymer(&["khas", "--mode", mode, "--k", "6", "--kappa-sq", "0.1", "--seed", "3"]);
        assert!(o.status.success(), "{mode}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
