mod args;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use config::{ConfigError, ConfigFile};

/// Why a run stopped: configuration problems exit with 2, failures of the
/// computation itself with 1.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Compute(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Compute(e)
    }
}

impl From<sbc_core::Error> for Failure {
    fn from(e: sbc_core::Error) -> Self {
        Self::Compute(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Compute(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let ctx = commands::Context {
        seed: sbc_core::RngSeed(file.seed.or(cli.seed).unwrap_or(0)),
        out: file.out.clone().or(cli.out).unwrap_or_else(|| PathBuf::from("out")),
        config_path: file.path.clone(),
    };
    commands::dispatch(&ctx, &file, cli.command)
}
