//! Command-line front end: scenario files, overrides, command dispatch and reports.

pub mod config;
pub mod error;
pub mod load;
pub mod run;

use clap::Parser;

use crate::config::{Cli, RunConfig};
use crate::error::CliResult;

/// Parses arguments and runs the command. The report is written to `--out`
/// when given and returned otherwise.
pub fn main_with(args: impl IntoIterator<Item = String>) -> CliResult<Option<String>> {
    let cli = Cli::try_parse_from(args).map_err(|e| {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            print!("{e}");
            std::process::exit(0);
        }
        error::CliError::Usage(e.to_string())
    })?;
    let cfg = RunConfig::from_cli(cli)?;
    let text = run::execute(&cfg)?;
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, &text).map_err(|e| error::CliError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}
