//! The `vipr` command line.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::ffi::OsString;

use clap::{CommandFactory, FromArgMatches};

pub use args::{Cli, Command};
pub use error::CliError;

pub fn command() -> clap::Command {
    Cli::command()
}

pub enum Parsed {
    Run(Cli),
    /// help, version or a usage error, already rendered
    Exit(clap::Error),
}

fn parse_once(argv: &[OsString]) -> Result<Parsed, CliError> {
    match command().try_get_matches_from(argv) {
        Ok(m) => Cli::from_arg_matches(&m)
            .map(Parsed::Run)
            .map_err(|e| CliError::BadInput(e.to_string())),
        Err(e) => Ok(Parsed::Exit(e)),
    }
}

/// Parse `argv`, merging in the config file when one is given.
pub fn parse(argv: &[OsString]) -> Result<Parsed, CliError> {
    let cli = match parse_once(argv)? {
        Parsed::Run(cli) => cli,
        exit => return Ok(exit),
    };
    let Some(path) = &cli.config else {
        return Ok(Parsed::Run(cli));
    };
    let cfg = config::load(path)?;
    let merged = config::splice(argv, cli.command.name(), &cfg)?;
    match parse_once(&merged)? {
        Parsed::Exit(e) if e.use_stderr() => Err(CliError::BadInput(format!(
            "after applying config {}: {}",
            path.display(),
            e.render().to_string().trim_end()
        ))),
        other => Ok(other),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::BadInput("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::failed("thread pool", e))?;
    }
    match &cli.command {
        Command::Infer(a) => commands::infer(a),
        Command::Mll(a) => commands::mll(a).map(|_| ()),
        Command::Sample(a) => commands::sample(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Check(a) => commands::check(a),
        Command::BenchScaling(a) => commands::bench_scaling(a),
    }
}
