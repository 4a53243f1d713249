//! `subdiff`: forward solves, coefficient reconstructions, gradient checks,
//! noise sweeps and stability diagnostics driven by one config file.
//!
//! Exit status: 0 success, 2 configuration error, 3 solver failure,
//! 4 a check ran but failed.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::RunDir;
use crate::config::CliConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(subdiff::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    fn missing(section: &str) -> Self {
        Self::Config(format!("missing section [{section}]"))
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Solver(subdiff::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Solver(_) => 3,
            Self::CheckFailed(_) => 4,
        }
    }
}

impl From<subdiff::Error> for CliError {
    fn from(e: subdiff::Error) -> Self {
        use subdiff::Error as E;
        match e {
            E::InvalidArgument(_) | E::InvalidCoefficient(_) | E::Parse { .. } | E::Expression { .. } => {
                Self::Config(e.to_string())
            }
            other => Self::Solver(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "subdiff", version, about = "Subdiffusion forward solver and coefficient reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file (TOML, or the JSON echoed by a previous run).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set forward.alpha=0.25`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output root; default `run.out`, then $SUBDIFF_OUT, then ./out.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Run directory name; default `run.id`, then the subcommand name.
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Print only errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Solve the forward problem; writes terminal.field and summary.json.
    Forward,
    /// Reconstruct q from synthetic terminal data; writes history.csv,
    /// q_star.field, q_error.field and summary.json.
    Invert,
    /// Compare the adjoint gradient with central differences.
    Gradcheck,
    /// Run a noise sweep; writes runs.csv, report.json, tables and fields.
    Bench,
    /// Decay, positivity and stability-quotient diagnostics.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Invert => "invert",
            Self::Gradcheck => "gradcheck",
            Self::Bench => "bench",
            Self::Verify => "verify",
        }
    }
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!("run.out={}", toml_string(&out.display().to_string())));
    }
    if let Some(id) = &cli.run_id {
        overrides.push(format!("run.id={}", toml_string(id)));
    }
    let config = CliConfig::load(cli.config.as_deref(), &overrides)?;

    if let Some(jobs) = config.run.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))?;
    }
    let id = config.run.id.clone().unwrap_or_else(|| cli.command.name().to_string());
    let dir = RunDir::create(config.out_root().join(id))?;
    let echo = dir.path.join("config.json");
    std::fs::write(&echo, config.to_json()).map_err(|e| CliError::io(&echo, e))?;

    let summary = match cli.command {
        Command::Forward => commands::forward(&config, &dir),
        Command::Invert => commands::invert(&config, &dir),
        Command::Gradcheck => commands::gradcheck(&config, &dir),
        Command::Bench => commands::bench(&config, &dir),
        Command::Verify => commands::verify(&config, &dir),
    }?;
    Ok(format!("{summary}\noutput: {}", dir.path.display()))
}

/// Quotes a string as a TOML basic string.
fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            if !cli.quiet {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("subdiff: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
