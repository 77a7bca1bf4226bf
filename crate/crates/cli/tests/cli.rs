use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn spikeclan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikeclan"))
        .current_dir(dir)
        .env_remove("SPIKECLAN_SEED")
        .env_remove("SPIKECLAN_CONFIG")
        .args(args)
        .output()
        .unwrap()
}

fn only_run_dir(out: &Path) -> std::path::PathBuf {
    let dirs: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

#[test]
fn validate_without_interactions_reports_zero_offspring() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("w0.toml"),
        "[model]\npreset = \"independent\"\nneurons = 3\ndelta = 0.4\n",
    )
    .unwrap();
    let out = spikeclan(tmp.path(), &["validate", "--config", "w0.toml", "--out", "runs"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run = only_run_dir(&tmp.path().join("runs"));
    let report: Value = serde_json::from_slice(&std::fs::read(run.join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["e_delta"].as_f64(), Some(0.0));
    assert!(run.join("manifest.json").exists());
}

#[test]
fn sample_perfect_twice_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = spikeclan(tmp.path(), &["sample-perfect", "--seed", "42", "--out", out, "--quiet"]);
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
    }
    let (a, b) = (only_run_dir(&tmp.path().join("a")), only_run_dir(&tmp.path().join("b")));
    assert_eq!(a.file_name(), b.file_name());
    for name in ["raster.csv", "raster.json", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_changes_run_id_and_env_mirrors_flag() {
    let tmp = tempfile::tempdir().unwrap();
    spikeclan(tmp.path(), &["simulate", "--seed", "1", "--reps", "200", "--out", "flag"]);
    let by_env = Command::new(env!("CARGO_BIN_EXE_spikeclan"))
        .current_dir(tmp.path())
        .env("SPIKECLAN_SEED", "1")
        .env("SPIKECLAN_REPS", "200")
        .env("SPIKECLAN_OUT", "env")
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(by_env.status.code(), Some(0));
    spikeclan(tmp.path(), &["simulate", "--seed", "2", "--reps", "200", "--out", "other"]);
    let flag = only_run_dir(&tmp.path().join("flag"));
    let env = only_run_dir(&tmp.path().join("env"));
    let other = only_run_dir(&tmp.path().join("other"));
    assert_eq!(flag.file_name(), env.file_name());
    assert_ne!(flag.file_name(), other.file_name());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("typo.toml"), "[model]\npreset = \"two-neuron\"\ndelta = 0.7\ngama = 0.2\nweight = 0.1\n").unwrap();
    let o = spikeclan(tmp.path(), &["validate", "--config", "typo.toml"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama"));

    let o = spikeclan(tmp.path(), &["validate", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(4));

    let o = spikeclan(tmp.path(), &["sample-perfect", "--budget", "1", "--out", "runs"]);
    assert_eq!(o.status.code(), Some(3));

    std::fs::write(
        tmp.path().join("weak.toml"),
        "[model]\npreset = \"two-neuron\"\ndelta = 0.05\ngamma = 0.9\nweight = 1.0\n",
    )
    .unwrap();
    let o = spikeclan(tmp.path(), &["validate", "--config", "weak.toml", "--out", "runs"]);
    assert_eq!(o.status.code(), Some(2));

    let o = spikeclan(tmp.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn replay_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let o = spikeclan(tmp.path(), &["graph-tau", "--reps", "200", "--out", "runs"]);
    assert_eq!(o.status.code(), Some(0));
    let run = only_run_dir(&tmp.path().join("runs"));
    let manifest = run.join("manifest.json");
    let m = manifest.to_str().unwrap();
    assert_eq!(spikeclan(tmp.path(), &["replay", m]).status.code(), Some(0));
    let csv = run.join("tau_cdf.csv");
    let mut bytes = std::fs::read(&csv).unwrap();
    bytes.push(b'\n');
    std::fs::write(&csv, bytes).unwrap();
    let o = spikeclan(tmp.path(), &["replay", m]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("tau_cdf.csv"));
}
