//! Run directories, manifests and replay.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spikeclan::config::Config;
use thiserror::Error;

use crate::commands::{self, Artifact, Command, Outcome};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] spikeclan::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl RunError {
    /// Process exit status: 2 for a model or check the run cannot pass,
    /// 3 for an exhausted clan budget, 4 for configuration problems.
    pub fn exit_code(&self) -> u8 {
        use spikeclan::Error as E;
        match self {
            RunError::Core(E::Config { .. }) | RunError::Manifest { .. } => 4,
            RunError::Core(E::BudgetExceeded { .. }) => 3,
            RunError::Core(E::Io(_)) | RunError::Io { .. } => 1,
            RunError::Core(_) => 2,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub spikeclan: String,
    pub spikeclan_cli: String,
}

impl Versions {
    fn current() -> Self {
        Self {
            spikeclan: spikeclan::VERSION.to_string(),
            spikeclan_cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to reproduce a run. Wall-clock time is kept out of it
/// (see [`TIMING_FILE`]) so identical runs write identical manifests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub subcommand: Command,
    pub seed: u64,
    /// The configuration after command-line overrides, as TOML.
    pub config: String,
    pub versions: Versions,
    pub outputs: Vec<OutputRecord>,
    pub rng_draws: u64,
    pub passed: bool,
    pub summary: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timing {
    pub run_id: String,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunResult {
    pub fn exit_code(&self) -> u8 {
        if self.manifest.passed {
            0
        } else {
            2
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash of the subcommand and the configuration, seed included.
pub fn run_id(command: Command, config_toml: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"spikeclan-run\n");
    h.update(command.name().as_bytes());
    h.update(b"\n");
    h.update(config_toml.as_bytes());
    hex::encode(h.finalize())
}

fn manifest_for(command: Command, cfg: &Config, config: String, outcome: &Outcome) -> RunManifest {
    RunManifest {
        run_id: run_id(command, &config),
        subcommand: command,
        seed: cfg.seed,
        config,
        versions: Versions::current(),
        outputs: outcome
            .artifacts
            .iter()
            .map(|a| OutputRecord {
                path: a.name.clone(),
                bytes: a.bytes.len() as u64,
                sha256: sha256_hex(&a.bytes),
            })
            .collect(),
        rng_draws: outcome.draws,
        passed: outcome.passed,
        summary: outcome.summary.clone(),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(io_error(path))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, RunError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(spikeclan::Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Run `command` and write its artifacts, manifest and timing under
/// `out_root/<run id>/`.
pub fn execute(command: Command, cfg: &Config, out_root: &Path) -> Result<RunResult, RunError> {
    let started = Instant::now();
    let config = cfg.to_toml()?;
    let outcome = commands::run(command, cfg)?;
    let manifest = manifest_for(command, cfg, config, &outcome);
    let dir = out_root.join(&manifest.run_id);
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    for Artifact { name, bytes } in &outcome.artifacts {
        write(&dir.join(name), bytes)?;
    }
    write(&dir.join(MANIFEST_FILE), &to_json(&manifest)?)?;
    let timing = Timing {
        run_id: manifest.run_id.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    write(&dir.join(TIMING_FILE), &to_json(&timing)?)?;
    Ok(RunResult { dir, manifest })
}

/// Outcome of re-running a manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayReport {
    pub run_id: String,
    /// Artifacts whose recomputed bytes differ from the manifest or from the
    /// file next to it.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, RunError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Recompute the run recorded in `manifest_path` and compare every artifact
/// byte for byte.
pub fn replay(manifest_path: &Path) -> Result<ReplayReport, RunError> {
    let recorded = read_manifest(manifest_path)?;
    let cfg = Config::from_toml(&recorded.config)?;
    let outcome = commands::run(recorded.subcommand, &cfg)?;
    let fresh = manifest_for(recorded.subcommand, &cfg, recorded.config.clone(), &outcome);
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut mismatches = Vec::new();
    if fresh.run_id != recorded.run_id {
        mismatches.push("run_id".to_string());
    }
    if fresh.outputs.len() != recorded.outputs.len() {
        mismatches.push("outputs".to_string());
    }
    for (artifact, record) in outcome.artifacts.iter().zip(&fresh.outputs) {
        let expected = recorded.outputs.iter().find(|o| o.path == artifact.name);
        let on_disk = fs::read(dir.join(&artifact.name)).ok();
        if expected != Some(record) || on_disk.as_deref() != Some(&artifact.bytes[..]) {
            mismatches.push(artifact.name.clone());
        }
    }
    Ok(ReplayReport {
        run_id: recorded.run_id,
        mismatches,
    })
}
