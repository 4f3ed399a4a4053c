use std::process::Command;

use serde_json::Value;

fn pinrenewal(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pinrenewal")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn b0_reports_critical_tilt() {
    let (code, out, _) = pinrenewal(&["b0", "--family", "shifted", "--alpha", "0.5", "--m", "1", "--tol", "1e-6"]);
    assert_eq!(code, 0);
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["command"], "b0");
    let b0: f64 = doc["results"]["b0"].as_str().unwrap().parse().unwrap();
    assert!((b0 - 0.248399).abs() < 1e-5);
    assert_eq!(doc["results"]["tol"], "1e-6");
    assert!(doc["provenance"]["version"].is_string());
}

#[test]
fn b0_sentinel_for_basic() {
    let (code, out, _) = pinrenewal(&["b0", "--family", "basic", "--alpha", "0.5", "--b-hi", "3"]);
    assert_eq!(code, 0);
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["results"]["b0"], "inf");
}

#[test]
fn xi_scan_csv() {
    let (code, out, _) = pinrenewal(&["xi-scan", "--family", "basic", "--alpha", "0.5", "--grid", "0.4,0.2,0.1", "--out", "csv"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "b_times_xi").unwrap();
    for row in &lines[1..] {
        let v: f64 = row.split(',').nth(col).unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 0.1);
    }
}

#[test]
fn mc_is_reproducible_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let (code, _, err) = pinrenewal(&[
            "mc", "--family", "two-point", "--p", "0.5", "--paths", "20000", "--horizon", "10", "--seed", "7",
            "--out-path", p.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn json_outputs_reparse() {
    let runs: [&[&str]; 9] = [
        &["law", "--family", "basic", "--alpha", "0.5", "--nmax", "5"],
        &["tilt", "--family", "shifted", "--alpha", "0.5", "--m", "2", "--b", "0.4"],
        &["u", "--family", "two-point", "--p", "0.5", "--nmax", "10"],
        &["delta", "--family", "basic", "--alpha", "0.5", "--b", "0.5", "--nmax", "50"],
        &["rate", "--family", "shifted", "--alpha", "0.5", "--m", "1", "--b", "0.5", "--nmax", "400"],
        &["ratio", "--family", "basic", "--alpha", "0.5", "--b", "0.5", "--n", "100,200"],
        &["roots", "--family", "shifted", "--alpha", "0.5", "--m", "1", "--b", "0.5"],
        &["pinning", "--family", "basic", "--alpha", "0.5", "--beta", "1", "--volume", "200"],
        &["mc", "--family", "basic", "--alpha", "0.5", "--b", "0.5", "--paths", "1000", "--horizon", "5"],
    ];
    for args in runs {
        let (code, out, err) = pinrenewal(args);
        assert_eq!(code, 0, "{args:?}: {err}");
        let doc: Value = serde_json::from_str(&out).unwrap();
        for key in ["command", "params", "results", "provenance"] {
            assert!(doc.get(key).is_some(), "{args:?} lacks {key}");
        }
        assert_eq!(doc["command"], args[0]);
    }
}

#[test]
fn roots_csv_has_the_explicit_root() {
    let (code, out, _) = pinrenewal(&["roots", "--family", "shifted", "--alpha", "0.5", "--m", "1", "--b", "0.5", "--out", "csv"]);
    assert_eq!(code, 0);
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[0] + 1.1921353359849).abs() < 1e-10);
}

#[test]
fn exit_codes() {
    let (code, _, err) = pinrenewal(&["tilt", "--family", "basic", "--alpha", "0.5", "--b", "-0.1"]);
    assert_eq!(code, 1);
    assert!(err.contains("--b"));
    let (code, _, err) = pinrenewal(&["tilt", "--family", "basic", "--alpha", "0.5", "--b", "1", "--colour", "red"]);
    assert_eq!(code, 1);
    assert!(err.contains("--colour"));
    let (code, _, _) = pinrenewal(&["delta", "--family", "basic", "--alpha", "0.5", "--b", "0.5", "--nmax", "1000", "--precision", "64"]);
    assert_eq!(code, 2);
    let (code, _, _) = pinrenewal(&["rate", "--family", "geometric", "--p", "0.3", "--nmax", "100"]);
    assert!(code == 2 || code == 3);
    let (code, _, _) = pinrenewal(&["b0", "--family", "shifted", "--alpha", "0.5", "--b-lo", "0.3", "--b-hi", "1"]);
    assert_eq!(code, 5);
    let (code, out, _) = pinrenewal(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("pinrenewal"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "family = basic\nalpha = 0.5\nb = 0.25\nnmax = 20\nout = csv\n").unwrap();
    let (code, out, err) = pinrenewal(&["u", "--config", cfg.to_str().unwrap(), "--nmax", "5"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 7);
    assert!(out.starts_with("n,u,d,grad_u\n"));
}
