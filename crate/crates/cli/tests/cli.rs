use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dissprep"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const PATH2: &str = r#"{"graph": {"n": 2, "edges": [[0, 1]]}, "bond_dim": 2, "random": {"seed": 5}}"#;
const RING3: &str = r#"{"graph": {"n": 3, "edges": [[0, 1], [1, 2], [0, 2]]}, "bond_dim": 2,
                        "random": {"seed": 2, "phys": {"padded": 1}, "delta": 0.1}}"#;

fn result(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("result.json")).unwrap()).unwrap()
}

#[test]
fn spectrum_reports_unique_fixed_point() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "path2.json", PATH2);
    let o = run(tmp.path(), &["spectrum", "--spec", "path2.json", "--out", "s"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(&tmp.path().join("s"));
    assert_eq!(r["result"]["channel"]["unique_fixed_point"], Value::Bool(true));
    assert_eq!(r["result"]["liouvillian"]["unique_fixed_point"], Value::Bool(true));
    assert!(r["version"].as_str().unwrap().starts_with("dissprep "));
    assert_eq!(r["config"]["gamma"]["source"], "default");
    assert!(tmp.path().join("s/config.json").exists() && tmp.path().join("s/README.md").exists());
}

#[test]
fn oversized_gamma_exits_numerical() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "bad.json", RING3);
    let o = run(tmp.path(), &["channel", "--spec", "bad.json", "--gamma", "10", "--out", "c"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("max_gamma") && err.contains("edge"), "{err}");
}

#[test]
fn channel_report_and_dump() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "ring3.json", RING3);
    let o = run(tmp.path(), &["channel", "--spec", "ring3.json", "--dump", "--out", "c"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(&tmp.path().join("c"));
    assert_eq!(r["result"]["layers"], 3);
    assert!(r["result"]["max_completeness_residual"].as_f64().unwrap() <= 1e-12);
    assert!(tmp.path().join("c/kraus.json").exists());
}

#[test]
fn validation_errors_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "typo.json", r#"{"graph": {"n": 2, "edges": [[0, 1]]}, "bond_dims": 2}"#);
    let o = run(tmp.path(), &["gap", "--spec", "typo.json", "--out", "g"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bond_dim"));
    let o = run(tmp.path(), &["gap", "--spec", "missing.json"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(tmp.path(), &["experiment", "--kind", "fidelity_curves", "--n", "7", "--out", "e"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n/l"));
    let o = run(tmp.path(), &["spectrum", "--spec", "x.json", "--gamma", "abc"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn capacity_guard_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let edges: Vec<String> = (0..7).map(|i| format!("[{}, {}]", i, (i + 1) % 7)).collect();
    let spec = format!(r#"{{"graph": {{"n": 7, "edges": [{}]}}, "bond_dim": 2, "random": {{"seed": 1}}}}"#, edges.join(", "));
    write(tmp.path(), "ring7.json", &spec);
    let o = run(tmp.path(), &["spectrum", "--spec", "ring7.json", "--protocol", "channel", "--out", "s"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn identical_runs_differ_only_in_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", r#"{"g_grid": [0.05, 0.3, 0.5]}"#);
    let before = std::fs::read(&cfg).unwrap();
    let args = |out: &str| vec!["experiment", "--kind", "condition_number", "--config", "cfg.json", "--out", out].into_iter().map(String::from).collect::<Vec<_>>();
    for out in ["a", "b"] {
        let o = bin().current_dir(tmp.path()).args(args(out)).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let strip = |d: &str| {
        let mut v = result(&tmp.path().join(d));
        v.as_object_mut().unwrap().remove("timestamp");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(strip("a"), strip("b"));
    let raw = |d: &str| std::fs::read_to_string(tmp.path().join(d).join("result.json")).unwrap();
    let drop_ts = |s: String| s.lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n");
    assert_eq!(drop_ts(raw("a")), drop_ts(raw("b")));
    assert_eq!(std::fs::read(&cfg).unwrap(), before);
    let csv = std::fs::read_to_string(tmp.path().join("a/condition_number.csv")).unwrap();
    assert!(csv.starts_with("g,sigma_min,sigma_max,kappa\n"));
    let readme = std::fs::read_to_string(tmp.path().join("a/README.md")).unwrap();
    assert!(readme.contains("condition_number.csv"));
    let resolved: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/config.json")).unwrap()).unwrap();
    assert_eq!(resolved["config"]["config"]["threshold"], 0.999);
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "path2.json", PATH2);
    let o = bin().current_dir(tmp.path()).env("DISSPREP_OUTPUT_ROOT", "root").args(["gap", "--spec", "path2.json"]).output().unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("root/gap/result.json").exists());
}

#[test]
fn block_then_evolve() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["--threads", "1", "block", "--g", "0.3", "--n", "4", "--l", "2", "--out", "b"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(&tmp.path().join("b"));
    assert_eq!(r["result"]["blocks"].as_array().unwrap().len(), 2);
    for proto in ["channel", "lindblad", "trajectories"] {
        let out = format!("e_{proto}");
        let o = run(
            tmp.path(),
            &["evolve", "--spec", "b/spec.json", "--protocol", proto, "--steps", "20", "--t-final", "1", "--trajectories", "64", "--out", &out],
        );
        assert!(o.status.success(), "{proto}: {}", String::from_utf8_lossy(&o.stderr));
        let csv = std::fs::read_to_string(tmp.path().join(&out).join("timeseries.csv")).unwrap();
        assert!(csv.starts_with("t,fidelity,energy,violation\n"));
        let meta: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join(&out).join("timeseries.json")).unwrap()).unwrap();
        assert_eq!(meta["spec_hash"].as_str().unwrap().len(), 64);
    }
    let o = run(tmp.path(), &["evolve", "--spec", "b/spec.json", "--start", "product:0,1", "--steps", "5", "--out", "p"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(tmp.path(), &["bounds", "--spec", "b/spec.json", "--out", "bd"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("PASS") || String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}
