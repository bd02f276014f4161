use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

use lra_noise_cli::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lra-noise"))
}

/// Writes `cfg` into `dir` with `output_dir` pointing at `dir/out` and runs
/// the command. Returns the exit code and the output directory.
fn run(cmd: &str, dir: &Path, mut cfg: Value, extra: &[&str]) -> (i32, PathBuf) {
    let out = dir.join("out");
    cfg["output_dir"] = json!(out);
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let status = bin().arg(cmd).arg("--config").arg(&path).args(extra).output().unwrap();
    (status.status.code().unwrap(), out)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn small() -> Value {
    json!({
        "schema": 1,
        "j_m": 100,
        "n_samples": 300,
        "master_seed": 5,
        "image": {"resolution": 12, "full_half_width": 0.5, "local_half_width": 4.0}
    })
}

#[test]
fn config_round_trips_through_json() {
    let cfg = ExperimentConfig::from_json(&small().to_string()).unwrap();
    let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.epsilon(), 0.01);
    assert_eq!(cfg.window, Some(24.0));

    let mut no_window = small();
    no_window["window"] = Value::Null;
    let cfg = ExperimentConfig::from_json(&no_window.to_string()).unwrap();
    assert_eq!(cfg.window, None);
    assert_eq!(ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
}

#[test]
fn exactly_one_of_epsilon_and_j_m() {
    let mut both = small();
    both["epsilon"] = json!(0.01);
    assert!(ExperimentConfig::from_json(&both.to_string()).is_err());
    let mut neither = small();
    neither.as_object_mut().unwrap().remove("j_m");
    assert!(ExperimentConfig::from_json(&neither.to_string()).is_err());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg["schema"] = json!(2);
    assert_eq!(run("predict", dir.path(), cfg, &[]).0, 2);

    let mut cfg = small();
    cfg["unknown_field"] = json!(1);
    assert_eq!(run("predict", dir.path(), cfg, &[]).0, 2);

    let missing = bin().args(["predict", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn kernel_check_passes_for_keys() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run("kernel-check", dir.path(), small(), &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("kernel_check.json"));
    let c = report["parseval_constant"].as_f64().unwrap();
    assert!((c - 7.0 / 3.0).abs() < 1e-6);
}

#[test]
fn kernel_check_fails_for_a_kernel_without_partition_of_unity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg["kernel"] = json!({
        "kind": "piecewise",
        "document": {
            "schema": 1,
            "name": "epanechnikov",
            "even": true,
            "pieces": [{"lo": -1.0, "hi": 1.0, "coeffs": [0.75, 0.0, -0.75]}]
        }
    });
    assert_eq!(run("kernel-check", dir.path(), cfg, &[]).0, 1);
}

#[test]
fn predict_reproduces_the_reference_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg["j_m"] = json!(1000);
    let (code, out) = run("predict", dir.path(), cfg, &[]);
    assert_eq!(code, 0);
    let pred = read_json(&out.join("predicted_covariance.json"));
    let m = &pred["matrix"];
    let close = |v: &Value, r: f64| (v.as_f64().unwrap() - r).abs() <= 0.01 * r;
    assert!(close(&m[0][0], 1.36) && close(&m[1][1], 1.36));
    assert!(close(&m[0][1], 0.86) && close(&m[1][0], 0.86));
    assert_eq!(m[0][1], m[1][0]);

    let profile = std::fs::read_to_string(out.join("covariance_profile.csv")).unwrap();
    assert!(profile.starts_with("s,v_x,v_y,covariance,error_estimate"));
    assert_eq!(profile.lines().count(), 162);
}

#[test]
fn flags_override_the_file_and_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run("predict", dir.path(), small(), &["--seed", "99", "--threads", "1"]);
    assert_eq!(code, 0);
    let echoed = read_json(&out.join("effective_config.json"));
    assert_eq!(echoed["master_seed"], json!(99));
    assert_eq!(echoed["threads"], json!(1));
    ExperimentConfig::from_json(&echoed.to_string()).unwrap();
}

#[test]
fn simulate_is_byte_for_byte_reproducible() {
    let files = [
        "ensemble_stats.json",
        "image_full.csv",
        "image_local.csv",
        "histogram_observed.csv",
        "noise_sample0.bin",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ca, oa) = run("simulate", a.path(), small(), &["--threads", "1", "--plots"]);
    let (cb, ob) = run("simulate", b.path(), small(), &["--threads", "3", "--plots"]);
    assert_eq!((ca, cb), (0, 0));
    for f in files {
        let x = std::fs::read(oa.join(f)).unwrap();
        let y = std::fs::read(ob.join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    assert!(oa.join("image_full.png").exists());
    let stats = read_json(&oa.join("ensemble_stats.json"));
    assert_eq!(stats["n_samples"], json!(300));
}

#[test]
fn validate_exit_code_follows_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg["thresholds"] = json!({"cov_error": 0.5, "pdf_error": 0.8, "mean_sigmas": 6.0});
    let (code, out) = run("validate", dir.path(), cfg.clone(), &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("comparison_report.json"));
    assert!(report["cov_error_frobenius"].as_f64().unwrap() >= 0.0);
    assert!(report["pdf_error_l2"].as_f64().unwrap() >= 0.0);

    cfg["thresholds"]["cov_error"] = json!(1e-9);
    assert_eq!(run("validate", dir.path(), cfg, &[]).0, 1);
}

#[test]
fn sweep_writes_the_series() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg["sweep"] = json!({"j_m": [10, 40, 160], "n_samples": 200, "min_error_at_largest": 0.0, "min_rank_correlation": -2.0});
    let (code, out) = run("sweep", dir.path(), cfg, &["--plots"]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epsilon,n,cov_error_frobenius,pdf_error_l2,mean_norm"));
    assert_eq!(lines.count(), 3);
    assert!(out.join("sweep.png").exists());
}
