use std::path::Path;
use std::process::{Command, Output};

use flexscatter_cli::manifest::{RunManifest, MANIFEST_FILE};

fn flexscatter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexscatter")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn ok(args: &[&str]) -> Output {
    let o = flexscatter(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_channels_and_reruns_identically() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    ok(&["solve", "--preset", "downstream", "--resolution", "24", "--seed", "3", "--out", s(&a)]);
    let m = RunManifest::load(&a).unwrap();
    let names: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
    for f in ["incident_real.msfg", "scattered_real.msfg", "amplitude.msfg", "solve.json"] {
        assert!(names.contains(&f), "{names:?}");
        assert!(a.join(f).is_file());
    }
    assert_eq!(m.seed, 3);
    ok(&["rerun", s(&a), "--out", s(&b), "--check"]);
    for o in &m.outputs {
        assert_eq!(std::fs::read(a.join(&o.path)).unwrap(), std::fs::read(b.join(&o.path)).unwrap());
    }
}

#[test]
fn tampered_digest_is_a_mismatch() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    ok(&["circle", "--resolution", "16", "--out", s(&a)]);
    let mut m = RunManifest::load(&a).unwrap();
    m.outputs[0].sha256 = "0".repeat(64);
    std::fs::write(a.join(MANIFEST_FILE), m.to_json()).unwrap();
    let o = flexscatter(&["rerun", s(&a), "--out", s(&root.path().join("b")), "--check"]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn changed_input_refuses_rerun() {
    let root = tempfile::tempdir().unwrap();
    let cluster = root.path().join("cluster.json");
    std::fs::write(&cluster, r#"{"positions": [[5.0, 5.0], [-8.0, 3.0]]}"#).unwrap();
    let a = root.path().join("a");
    ok(&["solve", "--cluster", s(&cluster), "--resolution", "16", "--out", s(&a)]);
    std::fs::write(&cluster, r#"{"positions": [[5.0, 6.0], [-8.0, 3.0]]}"#).unwrap();
    let o = flexscatter(&["rerun", s(&a), "--out", s(&root.path().join("b"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_run_leaves_no_output_directory() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("never");
    let o = flexscatter(&["invert", "--mode", "surrogate", "--resolution", "16", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());

    // a pre-existing directory keeps only what it held before
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("keep.txt"), "x").unwrap();
    let o = flexscatter(&["synth", "--type", "incident", "--preset", "nearfar", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let left: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("keep.txt")]);
}

#[test]
fn configuration_errors() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("o");
    let missing = root.path().join("missing.json");
    assert_eq!(code(&flexscatter(&["solve", "--config", s(&missing), "--out", s(&out)])), 1);

    let bad = root.path().join("bad.json");
    std::fs::write(&bad, r#"{"sed": 4}"#).unwrap();
    assert_eq!(code(&flexscatter(&["solve", "--config", s(&bad), "--out", s(&out)])), 2);

    let both = root.path().join("both.json");
    let problem = serde_json::to_value(flexscatter::problems::preset(flexscatter::problems::ProblemClass::Incident)).unwrap();
    std::fs::write(&both, serde_json::json!({"preset": "nearfar", "problem": problem}).to_string()).unwrap();
    assert_eq!(code(&flexscatter(&["solve", "--config", s(&both), "--out", s(&out)])), 2);

    assert_eq!(code(&flexscatter(&["solve", "--resolution", "0", "--out", s(&out)])), 2);
    assert!(!out.exists());
}

#[test]
fn config_file_and_flags_combine() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("c.json");
    std::fs::write(&cfg, r#"{"preset": "incident", "seed": 9, "resolution": [20, 12], "greens": "analytic"}"#).unwrap();
    let out = root.path().join("o");
    ok(&["solve", "--config", s(&cfg), "--seed", "4", "--out", s(&out)]);
    let m = RunManifest::load(&out).unwrap();
    assert_eq!(m.seed, 4);
    assert_eq!(m.config.problem.resolution, [20, 12]);
    assert_eq!(m.config.problem.class, flexscatter::problems::ProblemClass::Incident);
}

#[test]
fn synth_single_centred_channel() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("o");
    ok(&["synth", "--type", "incident", "--channels", "1", "--resolution", "65", "--out", s(&out)]);
    let g = flexscatter::dataset::read_field_grid(&out.join("synth_0000.msfg")).unwrap();
    assert_eq!(g.get(32, 32), 1.0);
    assert!((g.max_abs() - 1.0).abs() < 1e-12);
}

#[test]
fn gradcheck_reports_and_passes() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("o");
    ok(&["gradcheck", "--preset", "incident", "--n", "1", "--resolution", "16", "--out", s(&out)]);
    let csv = std::fs::read_to_string(out.join("gradcheck.csv")).unwrap();
    assert!(csv.starts_with("class,instance,quantity,rel_error\n"));
    assert_eq!(csv.lines().count(), 5);
    let m = RunManifest::load(&out).unwrap();
    assert_eq!(m.summary["passed"], serde_json::Value::Bool(true));
}
