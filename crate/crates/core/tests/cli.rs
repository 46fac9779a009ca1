use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emproc_core::cli::{exit_status, RunOutcome};
use emproc_core::Error;

const SMALL: &str = r#"
[model]
kind = "comonotone"
marginal = { kind = "uniform", lower = 0.0, upper = 1.0 }

[weights]
q = { kind = "constant", value = 1.0 }

[grid]
horizon = 1.0
points = [0.5, 1.0]

[run]
n = 50
replications = 200
seed = 7

[[checks]]
name = "paper_constants"

[[checks]]
name = "MEAN_CHECK"
"#;

fn emproc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emproc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn workspace_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn small(mean_check: &str) -> String {
    SMALL.replace("name = \"MEAN_CHECK\"", mean_check)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn describe_lists_checks_deterministically() {
    let config = workspace_config("uniform_simple.toml");
    let a = emproc(&["describe", "--config", config.to_str().unwrap()]);
    let b = emproc(&["describe", "--config", config.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("checks: 6"), "{text}");
    for name in [
        "rank_sum_identity",
        "paper_constants",
        "mean",
        "variance",
        "covariance_surface",
        "lstat_rank_form",
    ] {
        assert!(text.contains(name), "describe lacks {name}");
    }
}

#[test]
fn passing_verify_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.toml", &small("name = \"mean\""));
    let out = dir.path().join("out");
    let o = emproc(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let csv = std::fs::read_to_string(out.join("small.verify.csv")).unwrap();
    assert!(csv.starts_with("# emproc "));
    assert!(csv.contains("check,t,s,statistic,mc,se,oracle,z,n,R,seed"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("small.verify.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert!(json["rng_draws"].as_u64().unwrap() > 0);
    assert_eq!(json["checks"].as_array().unwrap().len(), 2);
}

#[test]
fn failing_tolerance_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let strict = "name = \"variance\"\ntolerance = { z_max = 0.0, mean_z_max = 0.0, bias_slack = 0.0 }";
    let config = write_config(dir.path(), "strict.toml", &small(strict));
    let out = dir.path().join("out");
    let o = emproc(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn negative_n_is_a_config_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let body = small("name = \"mean\"").replace("n = 50", "n = -5");
    let config = write_config(dir.path(), "negative.toml", &body);
    let out = dir.path().join("out");
    let o = emproc(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!stderr(&o).is_empty());
    assert!(!out.exists(), "no files are written on a config error");
}

#[test]
fn unknown_check_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "unknown.toml", &small("name = \"kurtosis_surface\""));
    let o = emproc(&["verify", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kurtosis_surface"), "{}", stderr(&o));
}

#[test]
fn oracle_subcommand_draws_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.toml", &small("name = \"mean\""));
    let out = dir.path().join("out");
    let o = emproc(&[
        "oracle",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("small.oracle.json")).unwrap()).unwrap();
    assert_eq!(json["rng_draws"], 0);
    assert!(json.get("checks").is_none());
    let surfaces = json["surfaces"].as_array().unwrap();
    assert_eq!(surfaces[0]["kind"], "Gamma1");
    assert!(!out.join("small.oracle.csv").exists());
}

#[test]
fn subcommand_without_matching_checks_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.toml", &small("name = \"mean\""));
    let o = emproc(&["tightness", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_status_mapping() {
    let ok: emproc_core::Result<RunOutcome> = Ok(RunOutcome::default());
    assert_eq!(exit_status(&ok), 0);
    assert_eq!(exit_status(&Err(Error::config("bad"))), 2);
    assert_eq!(exit_status(&Err(Error::domain("bad"))), 2);
    let numerical = Error::Invariant {
        t: 0.5,
        y: 0.1,
        what: "bound".into(),
    };
    assert_eq!(exit_status(&Err(numerical)), 3);
}
