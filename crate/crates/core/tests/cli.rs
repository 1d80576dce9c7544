use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ddmv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddmv")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn unknown_command_exits_2() {
    assert_eq!(code(&ddmv(&["frobnicate"])), 2);
}

#[test]
fn malformed_key_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[scheme]\nn = 8\n[drift]\ncapp = 2.0\n").unwrap();
    let out = dir.path().join("o");
    let o = ddmv(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("drift.capp") && err.contains("line 4"), "{err}");
    let o = ddmv(&["simulate", "--set", "scheme.bogus=1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("scheme.bogus"));
}

#[test]
fn unsaturated_drift_fails_assumptions() {
    let dir = tempfile::tempdir().unwrap();
    let o = ddmv(&["assumptions", "--set", "drift.model=unsaturated_mean_field", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["result"]["bound_pass"], false);
    let o = ddmv(&["assumptions", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
}

#[test]
fn numerical_abort_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // b·ε overflows to infinity on the second step
    let o = ddmv(&[
        "simulate",
        "--set",
        "scheme.unchecked=true",
        "--set",
        "drift.model=constant",
        "--set",
        "drift.value=[1e300]",
        "--set",
        "scheme.horizon=1e10",
        "--set",
        "scheme.particles=10",
        "--set",
        "scheme.n=8",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(manifest(dir.path())["error"].is_string());
}

#[test]
fn fp_solve_lists_existing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = ddmv(&["fp-solve", "--set", "fp.mesh=0.02", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path());
    let files = m["outputs"].as_array().unwrap();
    assert!(files.iter().any(|f| f == "results.csv"));
    for f in files {
        assert!(dir.path().join(f.as_str().unwrap()).exists(), "{f}");
    }
    assert_eq!(m["seed"], 0);
    assert_eq!(m["command"], "fp-solve");
}

#[test]
fn outputs_identical_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = ["simulate", "--seed", "17", "--set", "scheme.n=16", "--set", "scheme.particles=5000"];
    for (dir, w) in [(&a, "1"), (&b, "2")] {
        let mut args = base.to_vec();
        args.extend(["--workers", w, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&ddmv(&args)), 0);
    }
    let files = manifest(a.path())["outputs"].as_array().unwrap().clone();
    assert!(files.len() > 3);
    for f in files {
        let f = f.as_str().unwrap();
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
