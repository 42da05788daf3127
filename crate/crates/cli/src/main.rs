//! `liesde`: batch runner for the stochastic exponential/logarithm experiments.
//!
//! Exit codes: 0 success, 1 failed regression or i/o error, 2 usage,
//! 3 violated precondition, 4 numerical failure.

mod commands;
mod config;
mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use crate::commands::Artifact;
use crate::config::{Command, ExperimentConfig, Flags};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "liesde",
    version,
    about = "Stochastic exponential and logarithm on matrix Lie groups"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn manifest_path(out: &Path) -> PathBuf {
    let name = out.file_name().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{name}.manifest"))
}

fn write_artifacts(cfg: &ExperimentConfig, artifacts: &[Artifact]) -> Result<(), CliError> {
    let Some(out) = &cfg.out else {
        let mut stdout = std::io::stdout().lock();
        if let Some(a) = artifacts.iter().find(|a| a.suffix.is_none()) {
            stdout.write_all(a.contents.as_bytes())?;
        }
        return Ok(());
    };
    let manifest = cfg.to_kv();
    for a in artifacts {
        let path = match a.suffix {
            None => out.clone(),
            Some(s) => sibling(out, s),
        };
        fs::write(&path, &a.contents)?;
        fs::write(manifest_path(&path), &manifest)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let flags = match &cli.flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            let (file, command) = Flags::from_kv(&text)?;
            if let Some(c) = command.filter(|c| *c != cli.command) {
                return Err(CliError::Usage(format!(
                    "config {} is for `{c}`, not `{}`",
                    path.display(),
                    cli.command
                )));
            }
            cli.flags.over(file)
        }
        None => cli.flags,
    };
    let cfg = ExperimentConfig::resolve(cli.command, flags)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let outcome = pool.install(|| commands::run(&cfg))?;
    write_artifacts(&cfg, &outcome.artifacts)?;
    match outcome.regression {
        Some((failed, total)) if failed > 0 => Err(CliError::Regression { failed, total }),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
