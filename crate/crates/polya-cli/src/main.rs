mod args;
mod commands;
mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] polya::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Domain(polya::Error::Parse(_)) => 2,
            CliError::Domain(_) | CliError::Io(_) => 1,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let outcome = match cli.command {
        Command::UrnSim(a) => commands::urn_sim(a),
        Command::UrnExact(a) => commands::urn_exact(a),
        Command::UrnLimit(a) => commands::urn_limit(a),
        Command::TailSum(a) => commands::tail_sum(a),
        Command::TreeSim(a) => commands::tree_sim(a),
        Command::Stirling(a) => commands::stirling(a),
        Command::Crp(a) => commands::crp(a),
        Command::Verify(a) => commands::verify(a),
        Command::Constants(a) => commands::constants(a),
    }?;
    let text = outcome.report.render(outcome.format)?;
    match &outcome.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("polya: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
