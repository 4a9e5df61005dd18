use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    Regulate,
    Treaty,
    Sweep,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl SweepAxis {
    /// Parses `param:from:to:steps`.
    pub fn parse(spec: &str) -> CliResult<Self> {
        let bad = |msg: &str| CliError::Usage(format!("--sweep {spec}: {msg}"));
        let parts: Vec<&str> = spec.split(':').collect();
        let [key, from, to, steps] = parts.as_slice() else {
            return Err(bad("expected param:from:to:steps"));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number")));
        let steps: usize = steps
            .parse()
            .map_err(|_| bad(&format!("`{steps}` is not a step count")))?;
        if steps < 2 {
            return Err(bad("steps must be >= 2"));
        }
        Ok(SweepAxis {
            key: key.to_string(),
            from: num(from)?,
            to: num(to)?,
            steps,
        })
    }

    pub fn points(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                let w = k as f64 / last;
                (1.0 - w) * self.from + w * self.to
            })
            .collect()
    }
}

#[derive(Debug, Parser)]
#[command(name = "orbitgame", version, about = "Orbit-use game solvers: open access, regulation and treaties")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override a field, e.g. `scenario.k=0.2`, `tax.1.2=0.5`, `Q=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Sweep axis `param:from:to:steps`.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the random verification batch.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treat assumption violations as failures.
    #[arg(long)]
    pub strict: bool,
    /// Run the verification batch at full size.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub scenario_path: PathBuf,
    pub overrides: Vec<(String, String)>,
    pub sweep_axis: Option<SweepAxis>,
    pub output_format: OutputFormat,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strict: bool,
    pub full: bool,
}

pub fn split_override(raw: &str) -> CliResult<(String, String)> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::Override {
            key: raw.to_string(),
            message: "expected KEY=VALUE".into(),
        }),
    }
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> CliResult<Self> {
        let sweep_axis = cli.sweep.as_deref().map(SweepAxis::parse).transpose()?;
        match (cli.command, &sweep_axis) {
            (Command::Sweep, None) => {
                return Err(CliError::Usage("sweep needs --sweep param:from:to:steps".into()))
            }
            (c, Some(_)) if c != Command::Sweep => {
                return Err(CliError::Usage("--sweep is only valid with the sweep command".into()))
            }
            _ => {}
        }
        if cli.command == Command::Verify && cli.seed.is_none() {
            return Err(CliError::Usage("verify needs --seed".into()));
        }
        if cli.format == OutputFormat::Csv && !matches!(cli.command, Command::Solve | Command::Sweep) {
            return Err(CliError::Usage("csv output is available for solve and sweep".into()));
        }
        let overrides = cli
            .overrides
            .iter()
            .map(|o| split_override(o))
            .collect::<CliResult<_>>()?;
        Ok(RunConfig {
            command: cli.command,
            scenario_path: cli.scenario,
            overrides,
            sweep_axis,
            output_format: cli.format,
            out: cli.out,
            seed: cli.seed,
            strict: cli.strict,
            full: cli.full,
        })
    }
}
