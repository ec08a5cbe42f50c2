use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use secomm::harness::{read_csv, read_manifest, MethodKind, CSV_HEADER};

fn secomm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secomm"))
        .args(args)
        .output()
        .expect("run secomm")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn solve_default_config_converges_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("solve.json");
    let out = secomm(&[
        "solve",
        "--config",
        &config("default.toml"),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["converged"], true);
    assert_eq!(json["alloc"]["p"].as_array().unwrap().len(), 30);
    assert!(!json["trace"].as_array().unwrap().is_empty());
}

#[test]
fn solve_iteration_cap_exits_two() {
    let out = secomm(&["solve", "--eps0", "1e-12", "--k-max", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn solve_infeasible_power_floors_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // 30 users at 30 dBm each against a 40 dBm budget
    let cfg = write_config(dir.path(), "[user]\np_min_dbm = 30.0\n");
    let out = secomm(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("p_total"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_reported_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nn_users = 4\np_total = 40\n");
    let out = secomm(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("p_total") && err.contains("line 3"), "{err}");
}

#[test]
fn sweep_writes_one_row_per_point_and_method_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nn_users = 6\nseed = 3\n");
    let run = |sub: &str| -> PathBuf {
        let out_dir = dir.path().join(sub);
        let out = secomm(&[
            "sweep",
            "--config",
            &cfg,
            "--axis",
            "p_total_dbm",
            "--values",
            "30:40:2",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        out_dir.join("sweep_p_total_dbm.csv")
    };
    let first = run("a");
    let second = run("b");

    let text = fs::read_to_string(&first).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let result = read_csv(&first).unwrap();
    assert_eq!(result.values, vec![30.0, 32.0, 34.0, 36.0, 38.0, 40.0]);
    // three proposed weight pairs and two baselines per point
    assert_eq!(result.rows.len(), 30);
    assert!(result.rows.iter().all(|r| r.converged));
    assert_eq!(
        result.rows.iter().filter(|r| r.method == MethodKind::Proposed).count(),
        18
    );
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());

    let manifest = read_manifest(&first.with_file_name("sweep_p_total_dbm.manifest.json")).unwrap();
    assert_eq!(manifest.seed, 3);
    assert_eq!(manifest.wall_ms.len(), 30);
}

#[test]
fn sweep_unknown_axis_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = secomm(&[
        "sweep",
        "--axis",
        "s_total",
        "--values",
        "1:2:1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("p_total_dbm"), "{}", stderr(&out));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn verify_fixture_passes() {
    let out = secomm(&["verify", "--config", &config("n2_fixture.toml")]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 4, "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn verify_with_loose_tolerance_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nn_users = 2\nseed = 1\n\n[solver]\nbisect_tol = 1.0\n");
    let out = secomm(&["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_refuses_large_instances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nn_users = 5\n");
    let out = secomm(&["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains('3'), "{}", stderr(&out));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    let cfg = write_config(dir.path(), "[scenario]\nn_users = 3\nseed = 9\n");
    for (path, seed) in [(&a, None), (&b, Some("9")), (&c, Some("10"))] {
        let mut args = vec!["gen-scenario", "--config", &cfg, "--out", path.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert_eq!(secomm(&args).status.code(), Some(0));
    }
    let read = |p: &Path| fs::read_to_string(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}
