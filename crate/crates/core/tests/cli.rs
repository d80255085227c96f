use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ma-isac"))
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "num_paths = 2\n").unwrap();
    let status = bin()
        .args(["simulate", "--preset", "desk", "--methods", "omp2d,nomp_lsrc", "--snr", "10:10:20"])
        .args(["--trials", "2", "--seed", "4", "--no-timing", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,snr_db,cr_ports,cr_subcarriers,subregion_div,trial,nmse,angle_mae_deg,distance_mae_m,ospa_m,n_clu,runtime_ms,scene_hash"
    );
    assert_eq!(lines.count(), 2 * 2 * 2);
}

#[test]
fn check_suite_passes() {
    let out = bin().args(["check", "--suite", "ospa"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("[PASS]"));
}

#[test]
fn bad_arguments_fail() {
    let out = bin().args(["simulate", "--methods", "nope", "--trials", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["check", "--suite", "nope"]).output().unwrap();
    assert!(!out.status.success());
}
