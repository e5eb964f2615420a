//! The `oamturb` binary end to end: outputs, exit codes, determinism.

use std::path::Path;
use std::process::{Command, Output};

fn oamturb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oamturb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> String {
    let out = oamturb(args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn snapshot(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("resolved_config.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn unknown_config_key_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"experiment": "fig4_sweep", "parameters": {"colour": 3}}"#).unwrap();
    let out = oamturb(&["fig4", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn config_for_another_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"experiment": "screen_gallery"}"#).unwrap();
    let out = oamturb(&["fig5", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn malformed_flags_are_configuration_errors() {
    assert_eq!(code(&oamturb(&["crosstalk", "--sorter", "prism"])), 3);
    assert_eq!(code(&oamturb(&["capacity", "--strengths", "1:2:log"])), 3);
    assert_eq!(code(&oamturb(&["screen", "--resolution", "100", "--out", "/nonexistent/never"])), 3);
    assert_eq!(code(&oamturb(&["--help"])), 0);
}

#[test]
fn screen_writes_png_csv_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let stdout = ok(&["screen", "--resolution", "64", "--d-over-r0", "2", "--seed", "4", "--out", d]);
    assert!(stdout.contains("screen.png"));
    let png = std::fs::read(dir.path().join("screen.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");
    let csv = std::fs::read_to_string(dir.path().join("screen.csv")).unwrap();
    assert!(csv.starts_with("x_index,y_index,phase"));
    assert_eq!(csv.lines().count(), 1 + 64 * 64);
    let snap = snapshot(dir.path());
    assert_eq!(snap["experiment"], "screen_gallery");
    assert_eq!(snap["seed"], 4);
    assert_eq!(snap["parameters"]["subharmonics"], 3);
}

#[test]
fn mode_names_files_by_index() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["mode", "--resolution", "64", "--l", "-2", "--out", d]);
    for f in ["oam_l-2_intensity.png", "oam_l-2_phase.png", "oam_l-2.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    ok(&["mode", "--resolution", "64", "--ang", "1", "--n", "5", "--out", d]);
    assert!(dir.path().join("ang_n1_of5.csv").is_file());
    assert_eq!(code(&oamturb(&["mode", "--resolution", "64", "--ang", "5", "--n", "5", "--out", d])), 3);
}

#[test]
fn crosstalk_matrices_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["crosstalk", "--n", "5", "--d-over-r0", "1", "--normalize", "erasure", "--out", d]);
    let raw = std::fs::read_to_string(dir.path().join("crosstalk_raw.csv")).unwrap();
    let detected = std::fs::read_to_string(dir.path().join("crosstalk.csv")).unwrap();
    assert!(!raw.is_empty());
    // erasure adds a loss row
    let data_rows = |s: &str| s.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_rows(&detected), data_rows(&raw) + 1);
    assert_eq!(snapshot(dir.path())["parameters"]["normalize"], "erasure");
}

#[test]
fn fig4_is_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        ok(&[
            "fig4",
            "--dimensions",
            "3,5",
            "--strengths",
            "0.1:10:8:log",
            "--seed",
            "9",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    for f in ["fig4_n3.csv", "fig4_n5.csv", "fig4_polarization.csv", "fig4_summary.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    assert!(dirs[0].path().join("fig4.svg").is_file());
}

#[test]
fn fig5_reports_the_spacing_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["fig5", "--strengths", "0.01:30:20:log", "--out", dir.path().to_str().unwrap()]);
    assert!(stdout.contains("ordering MS=2 >= MS=1: holds"));
    assert!(stdout.contains("ordering MS=4 >= MS=2: holds"));
    assert!(stdout.contains("onset ratio"));
}

#[test]
fn validation_fails_without_subharmonics() {
    let dir = tempfile::tempdir().unwrap();
    let out = oamturb(&[
        "validate",
        "--subharmonics",
        "0",
        "--resolution",
        "256",
        "--screens",
        "100",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("turbulence.structure_function "), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    let structure = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "turbulence.structure_function")
        .unwrap();
    assert_eq!(structure["passed"], false);
}
