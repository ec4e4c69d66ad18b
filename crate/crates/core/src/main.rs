use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tempfile::NamedTempFile;

use twr_core::cli::{self, RunConfig};

#[derive(Parser)]
#[command(
    name = "twr",
    version,
    about = "Two-way ranging: joint delay, clock drift and offset estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML). Omitted sections take the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate exchanges and write the observation CSV.
    Simulate(Common),
    /// Estimate drift, delay and offset per trial.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Observation CSV to estimate from instead of simulating.
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// Print the Cramer-Rao bounds as key=value lines.
    Crlb(Common),
    /// Run the configured parameter sweep and write the statistics CSV.
    Sweep(Common),
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, String> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            RunConfig::parse(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

/// Writes through a temporary file in the target directory so a failed run
/// never leaves a partial file behind.
fn emit(out: Option<&Path>, contents: &str) -> Result<(), String> {
    match out {
        None => io::stdout()
            .lock()
            .write_all(contents.as_bytes())
            .map_err(|e| format!("cannot write to stdout: {e}")),
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp =
                NamedTempFile::new_in(dir).map_err(|e| format!("cannot create file in {}: {e}", dir.display()))?;
            tmp.write_all(contents.as_bytes())
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            tmp.persist(path)
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load_config(c.config.as_deref())?;
            let csv = cli::simulate(&cfg, c.seed).map_err(|e| e.to_string())?;
            emit(c.out.as_deref(), &csv)?;
        }
        Command::Estimate {
            common: c,
            observations,
        } => {
            let cfg = load_config(c.config.as_deref())?;
            let obs_text = match &observations {
                Some(p) => Some(fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?),
                None => None,
            };
            let out = cli::estimate(&cfg, obs_text.as_deref(), c.seed).map_err(|e| e.to_string())?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            emit(c.out.as_deref(), &out.csv)?;
        }
        Command::Crlb(c) => {
            let cfg = load_config(c.config.as_deref())?;
            let text = cli::crlb(&cfg).map_err(|e| e.to_string())?;
            emit(c.out.as_deref(), &text)?;
        }
        Command::Sweep(c) => {
            let cfg = load_config(c.config.as_deref())?;
            let out = cli::sweep(&cfg, c.seed).map_err(|e| e.to_string())?;
            emit(c.out.as_deref(), &out.csv)?;
            if !out.failures.is_empty() {
                for f in &out.failures {
                    eprintln!("error: {f}");
                }
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
