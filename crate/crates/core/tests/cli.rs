use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qmed(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmed")).args(args).current_dir(dir).env_remove("QMED_JOBS").output().unwrap()
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(qmed(&["combine", "--p", "0.01,0.5"], dir.path()).status.code(), Some(0));
    assert_eq!(qmed(&["combine"], dir.path()).status.code(), Some(2));
    assert_eq!(qmed(&["fdr", "--p", "0.5", "--q", "1.5"], dir.path()).status.code(), Some(2));
    assert_eq!(qmed(&["test", "--input", "missing.csv", "--B", "100"], dir.path()).status.code(), Some(1));
    fs::write(dir.path().join("bad.csv"), "S,M,Y,X1\n0,1,oops,1\n").unwrap();
    let out = qmed(&["fit", "--input", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oops"));
}

#[test]
fn combined_p_value_is_written() {
    let dir = tempfile::tempdir().unwrap();
    assert!(qmed(&["combine", "--p", "0.5,0.5,0.5", "--output", "o"], dir.path()).status.success());
    assert_eq!(json(dir.path().join("o/combine.json"))["p_value"], 0.5);
}

#[test]
fn repeated_tests_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(qmed(&["simulate", "--n", "200", "--alpha-s", "0.3", "--seed", "5", "--output", "sim"], dir.path()).status.success());
    let run = |out: &str, jobs: &str| {
        let o = qmed(&["test", "--input", "sim/data.csv", "--method", "all", "--B", "120", "--seed", "9", "--jobs", jobs, "--output", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(dir.path().join(out).join("test.json")).unwrap()
    };
    let first = run("a", "1");
    assert_eq!(first, run("b", "1"));
    assert_eq!(first, run("c", "2"));
    let results = serde_json::from_slice::<serde_json::Value>(&first).unwrap();
    assert_eq!(results.as_array().unwrap().len(), 6);
}

#[test]
fn example_model_grid_has_a_flat_direct_effect() {
    let dir = tempfile::tempdir().unwrap();
    let model = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/example2_model.json");
    let o = qmed(&["estimate", "--model", model.to_str().unwrap(), "--tau-grid", "0.1:0.9:0.1", "--output", "e"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("e/estimates.csv")).unwrap();
    let rows: Vec<Vec<f64>> = rdr.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[1] == 0.0));
    assert!(rows.windows(2).all(|w| w[1][2] > w[0][2]));
    let mid = &rows[4];
    assert!((mid[0] - 0.5).abs() < 1e-12 && (mid[2] - 0.573228).abs() < 1e-6);
}

#[test]
fn flags_override_the_config_file_and_the_manifest_records_the_result() {
    let dir = tempfile::tempdir().unwrap();
    let model = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/example2_model.json");
    fs::write(dir.path().join("qmed.toml"), "tau = 0.3\ns_prime = 2.0\n").unwrap();
    let m = model.to_str().unwrap();
    assert!(qmed(&["estimate", "--model", m, "--config", "qmed.toml", "--tau", "0.7", "--manifest", "--output", "a"], dir.path()).status.success());
    let manifest = json(dir.path().join("a/manifest.json"));
    assert_eq!(manifest["command"], "estimate");
    assert_eq!(manifest["query"]["tau"], 0.7);
    assert_eq!(manifest["query"]["s_prime"], 2.0);
    assert!(qmed(&["estimate", "--model", m, "--config", "qmed.toml", "--manifest", "--output", "b"], dir.path()).status.success());
    assert_eq!(json(dir.path().join("b/manifest.json"))["query"]["tau"], 0.3);

    fs::write(dir.path().join("typo.toml"), "tua = 0.3\n").unwrap();
    assert_eq!(qmed(&["estimate", "--model", m, "--config", "typo.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn emit_restricts_the_written_formats() {
    let dir = tempfile::tempdir().unwrap();
    assert!(qmed(&["fdr", "--p", "0.01,0.02,0.9", "--emit", "csv", "--output", "o"], dir.path()).status.success());
    assert!(dir.path().join("o/fdr.csv").exists());
    assert!(!dir.path().join("o/fdr.json").exists());
}

#[test]
fn failed_writes_leave_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    fs::create_dir_all(out.join("fdr.csv")).unwrap();
    let o = qmed(&["fdr", "--p", "0.01,0.02,0.9", "--output", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.join("fdr.json").exists());
}
