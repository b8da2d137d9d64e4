use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn varlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    varlab(&args)
}

const SMALL_Z: &str = r#"
kind = "variational_Z"
operator = "shift(32)"

[ensemble]
count = 16

[grid]
n_max = 8
"#;

#[test]
fn variation_prints_norm_and_witness() {
    let out = varlab(&["variation", "--values", "0,1,0,1,0", "--q", "2"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["norm"], 2.0);
    assert!(v["witness"].as_array().unwrap().len() >= 4);
}

#[test]
fn jump_prints_count() {
    let out = varlab(&["jump", "--values", "0,1,0,1,0", "--lambda", "0.5"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["count"], 4);
}

#[test]
fn negative_values_parse() {
    let out = varlab(&["variation", "--values", "-1,1", "--q", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let norm = stdout_json(&out)["norm"].as_f64().unwrap();
    assert!((norm - 5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn identity_check_passes() {
    let out = varlab(&["identity-check", "--operator", "doubly_stochastic_random(8,42)"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = stdout_json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["instances"], 100);
}

#[test]
fn unknown_operator_lists_builtins() {
    let out = varlab(&["identity-check", "--operator", "spiral(3)"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("lazy_walk(N)") && err.contains("cycle_laplacian(N)"), "{err}");
}

#[test]
fn weights_step_characteristic() {
    let out = varlab(&["weights", "--values", "1,1,2,2", "--offset", "-2", "--p", "2"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["characteristic"]["value"], 1.125);
}

#[test]
fn run_writes_three_files_and_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "z.toml", SMALL_Z);
    let out_dir = dir.path().join("out");
    let out = run(&cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["report.csv", "report.json", "manifest.json"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let leftovers: Vec<_> = fs::read_dir(&out_dir).unwrap().filter_map(|e| e.ok()).filter(|e| e.file_name().to_string_lossy().ends_with(".tmp")).collect();
    assert!(leftovers.is_empty());
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let digest: String = Sha256::digest(report["config"].as_str().unwrap().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    assert_eq!(manifest["config_sha256"], digest);
    assert_eq!(manifest["seed"], 7);
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("section,series,member,x1,x2,value\n"));
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "z.toml", SMALL_Z);
    let out_dir = dir.path().join("out");
    let out = run(&cfg, &out_dir, &["--seed", "99"]);
    assert!(out.status.success());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 99);
}

#[test]
fn q_two_without_override_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q2.toml", &format!("{SMALL_Z}\n[params]\nq = 2.0\n"));
    let out = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("q > 2"), "{}", stderr(&out));
    assert!(!dir.path().join("out").exists());

    let cfg = write_config(dir.path(), "q2o.toml", &format!("{SMALL_Z}\n[params]\nq = 2.0\nallow_q_override = true\n"));
    let out = run(&cfg, &dir.path().join("out2"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out2/report.json")).unwrap()).unwrap();
    assert!(report["flags"].as_array().unwrap().iter().any(|f| f == "q_override"));
}

#[test]
fn negative_weight_fixture_exits_2() {
    let out = run(&configs_dir().join("negative_weight.toml"), &std::env::temp_dir().join("varlab-never"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("measure weights must be positive"), "{}", stderr(&out));
}

#[test]
fn malformed_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "kind = \"variational_Z\"\noperator = \"shift(32)\"\n[grid]\nn_max = \"many\"\n");
    let out = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 4") && err.contains("n_max"), "{err}");

    let cfg = write_config(dir.path(), "unknown.toml", &format!("{SMALL_Z}\n[params]\nqq = 3.0\n"));
    let out = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("qq"), "{}", stderr(&out));

    let out = run(&dir.path().join("missing.toml"), &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tail_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sq.toml",
        "kind = \"square_function\"\noperator = \"lazy_walk(16)\"\n[ensemble]\ncount = 4\n[grid]\nn_max = 4\n",
    );
    let out = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("n_max"));
}

#[test]
fn non_contractive_kernel_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("k.txt"), "omega_weights 1 1\n1.5 0\n0 0.5\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "k.toml",
        "kind = \"variational_ergodic\"\noperator = \"kernel:k.txt\"\n[ensemble]\ncount = 4\n",
    );
    let out = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("contractive regularity"));
}

#[test]
fn reports_validate_against_schema() {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json")).unwrap(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "shift_averages_z64.toml",
        "lazy_walk16_jumps.toml",
        "convergence_cycle_laplacian32.toml",
        "ell1_probe_shift64.toml",
        "weighted_step_z64.toml",
        "lazy_walk16_m_order.toml",
        "birth_death_fixture.toml",
    ] {
        let out_dir = dir.path().join(name);
        let out = run(&configs_dir().join(name), &out_dir, &[]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
        if let Err(e) = jsonschema::validate(&schema, &report) {
            panic!("{name}: {e}");
        }
        let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), report["rows"].as_array().unwrap().len() + 1);
    }
}

#[test]
fn bad_thread_count_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_varlab"))
        .args(["jump", "--values", "0,1", "--lambda", "0.5"])
        .env("VARLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
