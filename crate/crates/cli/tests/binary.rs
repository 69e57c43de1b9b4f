use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cqnls(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqnls"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("CQNLS_OUT")
        .output()
        .expect("spawn cqnls")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_json(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().find(|l| l.starts_with('{')).expect("error json on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn groundstate_writes_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqnls(dir.path(), &["groundstate", "--omega", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("groundstate/omega-0.1.json");
    let f: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(f["format"], "cqnls-groundstate-v1");
    let q0 = f["q0"].as_f64().unwrap();
    assert!((q0 - 1.97204699).abs() < 1e-6);
    assert!(f["residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn bad_omega_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqnls(dir.path(), &["groundstate", "--omega", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["exit_code"], 2);
    let o = cqnls(dir.path(), &["groundstate", "--omega", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_without_fixture_is_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqnls(dir.path(), &["spectrum", "--omega", "0.05"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["exit_code"], 3);
}

#[test]
fn cubic_only_agrees_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqnls(dir.path(), &["groundstate", "--omega", "1", "--cubic-only"]);
    assert_eq!(o.status.code(), Some(0));
    let f: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("groundstate/cubic-omega-1.json")).unwrap())
            .unwrap();
    assert_eq!(f["nonlinearity"], "cubic");
    assert!((f["q0"].as_f64().unwrap() - 4.3373876799744133).abs() < 1e-6);
}

#[test]
fn small_gaussian_scatters() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqnls(dir.path(), &["evolve", "--init", "gaussian", "--amp", "1e-3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("evolve/gaussian");
    let result: Value = serde_json::from_str(&std::fs::read_to_string(run.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["verdict"], "ScatterProxy", "{result}");
    for f in ["trajectory.csv", "final.ckpt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(run.join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 2);
}

#[test]
fn checkpoint_restart_continues_in_time() {
    let dir = tempfile::tempdir().unwrap();
    let set = ["--set", "evolve.t_end=0.05"];
    let o = cqnls(dir.path(), &[&["evolve", "--init", "gaussian", "--amp", "0.5"][..], &set[..]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = dir.path().join("evolve/gaussian/final.ckpt");
    let o = cqnls(
        dir.path(),
        &[&["evolve", "--init", "checkpoint", "--from", ckpt.to_str().unwrap()][..], &set[..]].concat(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let result: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("evolve/checkpoint/result.json")).unwrap(),
    )
    .unwrap();
    assert!(result["t_end"].as_f64().unwrap() > 0.05 + 1e-3, "{result}");
}

#[test]
fn missing_checkpoint_is_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqnls(dir.path(), &["evolve", "--init", "checkpoint", "--from", "nope.ckpt"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn fast_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqnls(dir.path(), &["check", "--omega", "0.05", "--fast"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("check/omega-0.05.json").exists());
}

#[test]
fn classify_backward_negative_branch_blows_up() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cqnls(dir.path(), &["groundstate", "--omega", "0.05"]).status.code(), Some(0));
    let o = cqnls(dir.path(), &["classify", "--omega", "0.05", "--A", "-1", "--direction", "backward"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let label: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(label["label"], "Blowup", "{label}");
    assert_eq!(label["consistent_with_k_sign"], true);
}

#[test]
fn runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["evolve", "--init", "random", "--set", "evolve.t_end=0.05"];
    assert_eq!(cqnls(a.path(), &args).status.code(), Some(0));
    assert_eq!(cqnls(b.path(), &args).status.code(), Some(0));
    for f in ["trajectory.csv", "final.ckpt", "result.json"] {
        let x = std::fs::read(a.path().join("evolve/random").join(f)).unwrap();
        let y = std::fs::read(b.path().join("evolve/random").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn print_config_and_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqnls(dir.path(), &["--print-config", "--set", "evolve.dt0=2e-3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.starts_with("evolve.dt0") && l.contains("2e-3")), "{}", stdout(&o));
    let o = cqnls(dir.path(), &["--print-config", "--set", "no.such.key=1"]);
    assert_eq!(o.status.code(), Some(2));
}
