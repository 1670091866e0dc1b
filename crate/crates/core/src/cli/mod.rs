//! Command-line front end. Every subcommand writes one deterministic CSV
//! table; flags override values read from `--config`.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::FusionError;

pub use commands::{fmt_f64, run_command, Report};
pub use config::{Command, ExperimentConfig, Sweep};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Numeric(#[from] FusionError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numeric(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tandem-fusion", version, about = "Tandem and interactive fusion of two Gaussian sensors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Detection probability of YX, XYX and centralized detectors over a sigma_x sweep.
    Fig3(Flags),
    /// KL exponents with the final decision at X and at Y over a sigma_x sweep.
    Fig4(Flags),
    /// Monte-Carlo check of analytic rates and exponents.
    Validate(Flags),
    /// Best multi-step exponent against the one-way optimum.
    Mif(Flags),
    /// Exponents with several peripheral sensors.
    Multisensor(Flags),
    /// Operating points and exponents of one model.
    Eval(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_y: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// sigma_x sweep as start:stop:count.
    #[arg(long, value_name = "START:STOP:COUNT")]
    pub sweep: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte-Carlo trials per rate check.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Output CSV; stdout if absent. The effective config goes to PATH.config.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Flat `key = value` config file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Grid points per threshold axis.
    #[arg(long, value_name = "N")]
    pub grid_points: Option<usize>,
    /// Refinement and fixed-point tolerance.
    #[arg(long, value_name = "EPS")]
    pub tol: Option<f64>,
    /// Step counts for `mif`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_steps: Option<Vec<usize>>,
    /// Peripheral sensor counts for `multisensor`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub peripherals: Option<Vec<usize>>,
    /// Samples per trial in the exponent checks.
    #[arg(long)]
    pub exponent_n: Option<u64>,
    #[arg(long)]
    pub exponent_trials: Option<u64>,
}

impl CliCommand {
    fn split(self) -> (Command, Flags) {
        match self {
            CliCommand::Fig3(f) => (Command::Fig3, f),
            CliCommand::Fig4(f) => (Command::Fig4, f),
            CliCommand::Validate(f) => (Command::Validate, f),
            CliCommand::Mif(f) => (Command::Mif, f),
            CliCommand::Multisensor(f) => (Command::Multisensor, f),
            CliCommand::Eval(f) => (Command::Eval, f),
        }
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve(command: Command, flags: Flags) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::new(command);
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
        cfg.command = command;
    }
    if let Some(v) = flags.sigma_x {
        cfg.sigma_x = v;
    }
    if let Some(v) = flags.sigma_y {
        cfg.sigma_y = v;
    }
    if let Some(v) = flags.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = &flags.sweep {
        cfg.sweep = v.parse()?;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.trials {
        cfg.trials = v;
    }
    if let Some(v) = flags.out {
        cfg.out = Some(v);
    }
    if let Some(v) = flags.grid_points {
        cfg.search.grid_points = v;
    }
    if let Some(v) = flags.tol {
        cfg.search.refine_tol = v;
        cfg.iter.tolerance = v;
    }
    if let Some(v) = flags.n_steps {
        cfg.n_steps = v;
    }
    if let Some(v) = flags.peripherals {
        cfg.peripherals = v;
    }
    if let Some(v) = flags.exponent_n {
        cfg.exponent_n = v;
    }
    if let Some(v) = flags.exponent_trials {
        cfg.exponent_trials = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".config");
    PathBuf::from(name)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

/// Run the resolved config and write its outputs. Returns the exit code.
pub fn execute(cfg: &ExperimentConfig) -> Result<i32, CliError> {
    let report = run_command(cfg)?;
    match &cfg.out {
        Some(path) => {
            write_file(path, &report.csv)?;
            write_file(&sidecar(path), &cfg.to_string())?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(report.csv.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })?;
        }
    }
    Ok(if report.failed { 1 } else { 0 })
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, flags) = cli.command.split();
    let result = resolve(command, flags).and_then(|cfg| execute(&cfg));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("tandem-fusion: {e}");
            e.exit_code()
        }
    }
}
