use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn coxnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coxnet")).args(args).output().expect("binary runs")
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn assoc_sweep_over_relay_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("association.cfg");
    let out = coxnet(&[
        "assoc",
        "--config",
        cfg.to_str().unwrap(),
        "--sweep",
        "mu_r_per_km=0:4:1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("assoc.csv"));
    assert_eq!(rows[0], "mu_r_per_km,p_as,p_ar");
    let p_ar: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(p_ar.len(), 5);
    assert!(p_ar[0].abs() < 1e-4);
    assert!(p_ar.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn metadata_header_carries_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("association.cfg");
    let out = coxnet(&[
        "coverage-relay",
        "--config",
        cfg.to_str().unwrap(),
        "--tau-db",
        "-10:10:10",
        "--seed",
        "99",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("coverage_relay.csv")).unwrap();
    assert!(text.contains("# seed = 99"));
    assert!(text.contains("# lambda_l_per_km = 2.0"));
    let rows = data_rows(&dir.path().join("coverage_relay.csv"));
    assert_eq!(rows.len(), 4);
}

#[test]
fn throughput_sweep_marks_one_maximum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("throughput.cfg");
    let out = coxnet(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--sweep",
        "w2_mhz=2:18:4",
        "--tol",
        "1e-2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("sweep.csv");
    assert!(std::fs::read_to_string(&path).unwrap().contains("# argmax w2_mhz = "));
    let rows = data_rows(&path);
    assert!(rows[0].starts_with("w2_mhz,t_total_mbps"));
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",true")).count(), 1);
}

#[test]
fn validate_without_relays_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("no_relays.cfg");
    let out = coxnet(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--reps",
        "3000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = data_rows(&dir.path().join("validate.csv"));
    assert!(out.status.success(), "{rows:#?}");
    assert!(rows.iter().skip(1).all(|r| r.ends_with(",true")));
    let assoc = rows.iter().find(|r| r.starts_with("assoc_p_as,")).unwrap();
    assert!(assoc.contains(",1.00000000,"), "{assoc}");
}

#[test]
fn bad_exponent_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("association.cfg")).unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, text.replace("alpha = 2.5", "alpha = 2")).unwrap();
    let out = coxnet(&["assoc", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpha") && err.contains("2 < alpha <= beta"), "{err}");
    assert!(!dir.path().join("assoc.csv").exists());
}

#[test]
fn missing_key_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("association.cfg")).unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, text.replace("mu_u_per_km = 5\n", "")).unwrap();
    let out = coxnet(&["assoc", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu_u_per_km"));
}

#[test]
fn sweep_requires_a_range() {
    let cfg = configs().join("throughput.cfg");
    let out = coxnet(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = coxnet(&["sweep", "--config", cfg.to_str().unwrap(), "--sweep", "gamma=1:2:1"]);
    assert_eq!(out.status.code(), Some(2));
}
