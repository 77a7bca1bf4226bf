use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spikeclan_cli::{execute, load_config, replay, Command, Overrides, RunError};

#[derive(Debug, Parser)]
#[command(name = "spikeclan", version, about = "Perfect sampling and experiments for interacting spiking chains")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML configuration; defaults apply without one.
    #[arg(long, global = true, env = "SPIKECLAN_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed, replacing the one in the configuration.
    #[arg(long, global = true, env = "SPIKECLAN_SEED")]
    seed: Option<u64>,
    /// Root directory of run directories.
    #[arg(long, global = true, env = "SPIKECLAN_OUT", default_value = "runs")]
    out: PathBuf,
    /// Repetitions of the chosen subcommand (steps, graphs, samples).
    #[arg(long, global = true, env = "SPIKECLAN_REPS")]
    reps: Option<u64>,
    /// Largest clan before a perfect sampler gives up.
    #[arg(long, global = true, env = "SPIKECLAN_BUDGET")]
    budget: Option<usize>,
    /// Suppress the summary line.
    #[arg(long, global = true, env = "SPIKECLAN_QUIET")]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Model constants and regime.
    Validate,
    /// Range weights at one site-time.
    Decompose,
    /// Stationary raster from the clan sampler.
    SamplePerfect,
    /// Raster from the forward chain.
    Simulate,
    /// Return-time tail on random graphs.
    GraphTau,
    /// Adjacent-interval covariance on random graphs.
    IsiCov,
    /// Decay of the influence of the past.
    LossMemory,
    /// Perfect sampler against the exact stationary law.
    OracleCheck,
    /// Recompute a recorded run and compare its artifacts byte for byte.
    Replay { manifest: PathBuf },
}

fn command(sub: &Sub) -> Option<Command> {
    Some(match sub {
        Sub::Validate => Command::Validate,
        Sub::Decompose => Command::Decompose,
        Sub::SamplePerfect => Command::SamplePerfect,
        Sub::Simulate => Command::Simulate,
        Sub::GraphTau => Command::GraphTau,
        Sub::IsiCov => Command::IsiCov,
        Sub::LossMemory => Command::LossMemory,
        Sub::OracleCheck => Command::OracleCheck,
        Sub::Replay { .. } => return None,
    })
}

fn run(cli: &Cli) -> Result<u8, RunError> {
    if let Sub::Replay { manifest } = &cli.command {
        let report = replay(manifest)?;
        if !cli.quiet {
            if report.identical() {
                println!("replay {}: identical", report.run_id);
            } else {
                println!("replay {}: differs in {}", report.run_id, report.mismatches.join(", "));
            }
        }
        return Ok(if report.identical() { 0 } else { 2 });
    }
    let command = command(&cli.command).expect("replay handled above");
    let overrides = Overrides {
        seed: cli.seed,
        reps: cli.reps,
        budget: cli.budget,
    };
    let cfg = load_config(cli.config.as_deref(), command, &overrides)?;
    let result = execute(command, &cfg, &cli.out)?;
    if !cli.quiet {
        println!("{} [{}]", result.manifest.summary, result.dir.display());
    }
    Ok(result.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
