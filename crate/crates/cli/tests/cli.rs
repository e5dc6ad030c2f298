//! End-to-end checks of the binary's surfaces.

use std::path::PathBuf;
use std::process::Command;

fn acro() -> Command {
    Command::new(env!("CARGO_BIN_EXE_acro"))
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("acro-cli-{}-{name}", std::process::id()))
}

#[test]
fn print_config_dumps_all_sections() {
    let out = acro().arg("--print-config").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["platform", "camera", "scene", "mpc", "network", "schedule", "benchmark", "maneuvers"] {
        assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
    }
    // The dump itself is a loadable config.
    let cfg_path = tmp("cfg.json");
    std::fs::write(&cfg_path, &text).unwrap();
    let out2 = acro().arg("--config").arg(&cfg_path).arg("--print-config").output().unwrap();
    assert!(out2.status.success());
    assert_eq!(text, String::from_utf8(out2.stdout).unwrap());
    std::fs::remove_file(&cfg_path).unwrap();
}

#[test]
fn gen_trajectory_writes_expected_csv() {
    let path = tmp("traj.csv");
    let out = acro().args(["gen-trajectory", "power_loop", "--out"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,c,cwx,cwy,cwz"
    );
    assert!(text.lines().count() > 300);

    // Deterministic re-export.
    let path2 = tmp("traj2.csv");
    let out = acro().args(["gen-trajectory", "power_loop", "--out"]).arg(&path2).output().unwrap();
    assert!(out.status.success());
    assert_eq!(text, std::fs::read_to_string(&path2).unwrap());
    std::fs::remove_file(&path).unwrap();
    std::fs::remove_file(&path2).unwrap();
}

#[test]
fn unknown_maneuver_fails_nonzero() {
    let out = acro().args(["gen-trajectory", "loop_de_loop", "--out", "/tmp/x.csv"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn infeasible_config_fails_nonzero() {
    // A platform that cannot hover is rejected up front.
    let cfg_path = tmp("bad.json");
    std::fs::write(&cfg_path, r#"{"platform": {"params": {"thrust_to_weight": 0.8}}}"#).unwrap();
    let out = acro()
        .arg("--config")
        .arg(&cfg_path)
        .args(["gen-trajectory", "power_loop", "--out", "/tmp/x.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    std::fs::remove_file(&cfg_path).unwrap();
}

#[test]
fn wasserstein_on_logs() {
    // Two tiny synthetic observation logs; identical logs give zero.
    let line = r#"{"type":"camera","stamp":0.0,"tracks":[[0.1,0.2,0.0,0.0,1.0]],"degenerate":false}"#;
    let a = tmp("obs_a.jsonl");
    let b = tmp("obs_b.jsonl");
    std::fs::write(&a, format!("{line}\n{line}\n")).unwrap();
    std::fs::write(&b, format!("{line}\n")).unwrap();
    let out = acro().args(["wasserstein", "--obs-a"]).arg(&a).arg("--obs-b").arg(&b).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert_eq!(d, 0.0);
    std::fs::remove_file(&a).unwrap();
    std::fs::remove_file(&b).unwrap();
}
