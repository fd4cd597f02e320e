use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wgheat(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgheat"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("WGHEAT_OUT")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr is a JSON error report")
}

#[test]
fn sweep_writes_five_rows_and_c_fit() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgheat(dir.path(), &["sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("delta,kappa,err,bound,ratio"));
    assert_eq!(lines.count(), 5);

    let summary = read_json(&dir.path().join("sweep.json"));
    assert!(summary["c_fit"].as_f64().unwrap() > 0.0);

    let dat = std::fs::read_to_string(dir.path().join("sweep.dat")).unwrap();
    let kappas: Vec<f64> = dat.lines().skip(1).map(|l| l.split_whitespace().next().unwrap().parse().unwrap()).collect();
    assert_eq!(kappas.len(), 5);
    assert!(kappas.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn carleman_reports_five_passing_items() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgheat(dir.path(), &["carleman", "--set", "carleman.rho=4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lemma = read_json(&dir.path().join("lemma.json"));
    for item in ["a", "b", "c", "d", "e"] {
        assert_eq!(lemma[item]["passed"], Value::Bool(true), "item {item}");
    }
    assert!(dir.path().join("scan.csv").exists());
}

#[test]
fn missing_config_is_io_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = wgheat(&dir.path().join("out"), &["sweep", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("nope.toml"));
}

#[test]
fn unknown_config_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[grids]\nn_k = 16\nbogus = 1\n").unwrap();
    let o = wgheat(&dir.path().join("out"), &["forward", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "config");
}

#[test]
fn precondition_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgheat(dir.path(), &["carleman", "--set", "carleman.rho=1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("rho0"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sweep", "--seed", "11", "--set", "grids.n_t=200"];
    assert!(wgheat(a.path(), &args).status.success());
    assert!(wgheat(b.path(), &args).status.success());
    for name in ["sweep.json", "sweep.csv", "sweep.dat", "beta.json", "config.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let ma = read_json(&a.path().join("manifest.json"));
    let mb = read_json(&b.path().join("manifest.json"));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(ma["files"], mb["files"]);
}

#[test]
fn empty_sweep_writes_header_only_plot_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = wgheat(dir.path(), &["sweep", "--set", "sweep.deltas=[]"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dat = std::fs::read_to_string(dir.path().join("sweep.dat")).unwrap();
    assert_eq!(dat.lines().count(), 1);
    assert!(read_json(&dir.path().join("sweep.json"))["c_fit"].is_null());
}

#[test]
fn manifest_lists_every_output_file() {
    let dir = tempfile::tempdir().unwrap();
    assert!(wgheat(dir.path(), &["forward", "--set", "grids.n_k=16"]).status.success());
    let manifest = read_json(&dir.path().join("manifest.json"));
    let mut listed: Vec<String> =
        manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    listed.push("manifest.json".into());
    listed.sort();
    let mut on_disk: Vec<String> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
}

#[test]
fn forward_then_invert_recovers_beta() {
    let dir = tempfile::tempdir().unwrap();
    let fwd = dir.path().join("fwd");
    let common = ["--set", "grids.n_k=16", "--set", "forward.energy_cap=10", "--set", "inverse.l_fit=4"];
    let o = wgheat(&fwd, &[&["forward"][..], &common[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let trace = format!("inverse.trace={:?}", fwd.join("trace.csv").to_str().unwrap());
    let reference = format!("inverse.reference={:?}", fwd.join("beta.json").to_str().unwrap());
    let inv = dir.path().join("inv");
    let o = wgheat(&inv, &[&["invert", "--set", &trace, "--set", &reference][..], &common[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&inv.join("inversion.json"));
    assert!(summary["reference_error"].as_f64().unwrap() <= 1e-8 * summary["beta_hat_l2"].as_f64().unwrap());
}

#[test]
fn out_flag_wins_over_env() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("env");
    let flag_dir = dir.path().join("flag");
    let o = Command::new(env!("CARGO_BIN_EXE_wgheat"))
        .args(["check-energy", "--set", "grids.n_k=16", "--out"])
        .arg(&flag_dir)
        .env("WGHEAT_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_dir.join("energy.json").exists());
    assert!(!env_dir.exists());

    let o = Command::new(env!("CARGO_BIN_EXE_wgheat"))
        .args(["check-energy", "--set", "grids.n_k=16"])
        .env("WGHEAT_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_dir.join("energy.json").exists());
}
