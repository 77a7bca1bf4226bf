//! Run orchestration behind the `spikeclan` binary: subcommands, run
//! directories keyed by content hash, and byte-exact replay.

pub mod commands;
pub mod registry;

pub use commands::{Artifact, Command, Outcome, Overrides};
pub use registry::{execute, replay, run_id, ReplayReport, RunError, RunManifest, RunResult};

use std::path::Path;

use spikeclan::config::Config;

/// Load a configuration file, or the defaults without one, and apply overrides.
pub fn load_config(path: Option<&Path>, command: Command, overrides: &Overrides) -> Result<Config, RunError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| spikeclan::Error::Config {
                field: "--config".into(),
                message: format!("{}: {e}", p.display()),
            })?;
            Config::from_toml(&text)?
        }
        None => Config::default(),
    };
    overrides.apply(command, &mut cfg)?;
    Ok(cfg)
}
