use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nqs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nqs")).args(args).output().expect("spawn nqs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn stoq_check_finds_13_witness() {
    let v = stdout_json(&nqs(&["stoq-check", "--model", "txyz", "--params", "0.25,0.75,-1,-1"]));
    assert_eq!(v["transformable"], true);
    assert_eq!(v["witness"], "(1,3)");
}

#[test]
fn stoq_check_j1j2_is_not_transformable() {
    let v = stdout_json(&nqs(&["stoq-check", "--model", "j1j2", "--params", "1,0.3"]));
    assert_eq!(v["transformable"], false);
    assert!(v["witness"].is_null());
}

#[test]
fn ed_majumdar_ghosh() {
    let v = stdout_json(&nqs(&["ed", "--model", "j1j2", "--params", "1.0,0.5", "--n", "12", "--sector", "jz0"]));
    assert!((v["energy"].as_f64().unwrap() + 18.0).abs() < 1e-8);
    assert_eq!(v["dimension"], 924);
}

#[test]
fn ed_observables() {
    let v = stdout_json(&nqs(&[
        "ed", "--model", "xxz", "--params", "1", "--n", "8", "--observables", "--top-k", "5",
    ]));
    let top = &v["top_k_mass"];
    let v = &v["observables"];
    let s = v["entropy_half"].as_f64().unwrap();
    assert!(s > 0.0 && s < 4.0 * std::f64::consts::LN_2);
    let m = top["mass"].as_f64().unwrap();
    assert!(m > 0.0 && m <= 1.0);
}

#[test]
fn missing_config_is_a_schema_error() {
    let out = nqs(&["vqmc", "--config", "definitely-missing.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_key_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"model":{"name":"xxz","params":[1],"n_sites":6},"seed":1,"bogus":3}"#).unwrap();
    let out = nqs(&["vqmc", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_fails() {
    assert!(!nqs(&["frobnicate"]).status.success());
}

fn sweep(config: &Path, out: &Path) {
    let o = nqs(&["sweep", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_rerun_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{
  "model": {"name": "xxz-sr", "params": [1.0], "n_sites": 6},
  "ansatz": {"alpha": 1},
  "optimizer": {"method": "sr", "epochs": 15},
  "sampler": {"kind": "exact", "samples_multiplier": 0.5},
  "seed": 11,
  "instances": 2,
  "sweep": {"parameter": "delta", "values": [0.5, 1.5]}
}"#,
    )
    .unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    sweep(&cfg, &first);
    sweep(&first.join("manifest.json"), &second);
    let a = fs::read(first.join("summary.csv")).unwrap();
    let b = fs::read(second.join("summary.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 5);
}

#[test]
fn vqmc_writes_curve_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"model":{"name":"xxz-sr","params":[1.0],"n_sites":6},"ansatz":{"alpha":1},
            "optimizer":{"method":"er","epochs":30},"seed":3}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = nqs(&["vqmc", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,energy_re,energy_im,energy_std,norm_energy,acceptance,lambda\n"));
    assert_eq!(curve.lines().count(), 31);
    assert!(out.join("final.rbm").exists());
    assert!(out.join("manifest.json").exists());
}
