use std::path::{Path, PathBuf};
use std::process::Command;

use delayou::{Beta, DelayOperator};
use delayou_cli::scenario::Model;
use delayou_cli::verify::Status;
use delayou_cli::{load_scenario, parse_scenario, run_verify};

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

#[test]
fn bundled_scenarios_load() {
    for entry in std::fs::read_dir(bundled("")).unwrap() {
        let path = entry.unwrap().path();
        load_scenario(&path).unwrap_or_else(|e| panic!("{e}"));
    }
    let s = load_scenario(&bundled("distributed_instability.json")).unwrap();
    assert_eq!(s.kernel.beta(), &Beta::Constant(-1.5));
    assert_eq!(s.kernel.r(), 1.0);

    let s = load_scenario(&bundled("fractional_delay.json")).unwrap();
    assert_eq!(s.kernel.alpha(), 1.0);
    match s.model {
        Model::Dirichlet { length, a1, .. } => {
            assert_eq!(length, 1.0);
            assert_eq!(a1, DelayOperator::Fractional { delta: 0.5 });
        }
        other => panic!("unexpected model {other:?}"),
    }
}

#[test]
fn missing_delay_names_the_field() {
    let e = parse_scenario(
        r#"{"model": {"type": "modes", "modes": [{"mu": -1, "f": 1}]}, "kernel": {"alpha": 0.2}}"#,
        Path::new("."),
        "x",
    )
    .unwrap_err();
    assert_eq!(e.errors, vec!["kernel.r: missing required field".to_string()]);
}

#[test]
fn stable_discrete_delay_passes() {
    let s = load_scenario(&bundled("discrete_delay.json")).unwrap();
    let report = run_verify(&s);
    assert!(report.passed, "{}", report.to_json());
    assert_eq!(report.stability, "stable");
    assert!(report.stages.iter().all(|st| st.status == Status::Pass));
}

#[test]
fn unstable_kernel_skips_covariance() {
    let s = load_scenario(&bundled("distributed_instability.json")).unwrap();
    let report = run_verify(&s);
    assert_eq!(report.stability, "unstable");
    assert!(report.passed);
    let cov = report.stages.iter().find(|st| st.name == "covariance").unwrap();
    assert_eq!(cov.status, Status::Skipped);
    assert!(cov.reason.as_deref().unwrap().starts_with("skipped: no stationary solution"));
    let crit = &report.stages[0].data["criteria"];
    let root = crit.as_array().unwrap().iter().find(|c| c["criterion"] == "positive_real_root").unwrap();
    assert_eq!(root["verdict"], "unstable");
}

#[test]
fn ou_report_carries_analytic_numbers() {
    let s = load_scenario(&bundled("ou_baseline.json")).unwrap();
    let report = run_verify(&s);
    assert!(report.passed, "{}", report.to_json());
    let cov = report.stages.iter().find(|st| st.name == "covariance").unwrap();
    assert_eq!(cov.data["analytic_variances"][0], 0.5);
    assert!((cov.data["variances"][0].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!(cov.checks.iter().any(|c| c.name == "analytic_ou_error" && c.passed));
}

#[test]
fn reports_are_byte_identical() {
    let s = load_scenario(&bundled("heat_discrete_delay.json")).unwrap();
    assert_eq!(run_verify(&s).to_json(), run_verify(&s).to_json());
}

fn verify_exit(scenario: &Path, extra: &[&str]) -> (i32, String) {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_delayou"))
        .arg("--scenario")
        .arg(scenario)
        .arg("--out-dir")
        .arg(dir.path())
        .args(extra)
        .arg("verify")
        .output()
        .unwrap();
    let written = std::fs::read_to_string(dir.path().join("verify.json")).unwrap_or_default();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), written);
    (out.status.code().unwrap(), written)
}

#[test]
fn exit_code_follows_checks() {
    let (code, first) = verify_exit(&bundled("heat_discrete_delay.json"), &[]);
    assert_eq!(code, 0);
    let (_, second) = verify_exit(&bundled("heat_discrete_delay.json"), &["--threads", "2"]);
    assert_eq!(first, second);

    // too few paths for the Monte Carlo stage
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.json");
    std::fs::write(
        &path,
        r#"{"model": {"type": "modes", "modes": [{"mu": -1, "f": 1}]}, "kernel": {"r": 1}, "run": {"paths": 5}}"#,
    )
    .unwrap();
    let (code, report) = verify_exit(&path, &[]);
    assert_eq!(code, 1);
    assert!(report.contains("ensemble too small"));
}

#[test]
fn invalid_scenario_exits_with_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"model": {"type": "modes"}, "kernel": {"r": -1, "beta": {"type": "nope"}}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_delayou"))
        .arg("--scenario")
        .arg(&path)
        .arg("stability")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("model.modes: missing required field"), "{err}");
    assert!(err.contains("kernel.r: must be positive"), "{err}");
    assert!(err.contains("kernel.beta.type: expected"), "{err}");
}
