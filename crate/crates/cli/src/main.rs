//! `brl`: Green/Robin evaluation, ring scans, threshold searches, reduced
//! systems and bubble profiles on the 4D annulus.

mod commands;
mod config;
mod output;
mod record;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use brl_core::Point4;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config or paths.
    Usage(String),
    Core(brl_core::Error),
    /// A computation ran but did not converge.
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_usage() => 2,
            CliError::Core(_) | CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

impl From<brl_core::Error> for CliError {
    fn from(e: brl_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "brl",
    version,
    about = "Blow-up reduction numerics on the 4D annulus"
)]
struct Cli {
    /// Worker threads for parallel sweeps [default: all cores]
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Also write a JSON run record to this path
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Series truncation; `BRL_MAX_TERMS` replaces the default term count.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SeriesArgs {
    #[arg(long)]
    pub max_terms: Option<usize>,
    #[arg(long)]
    pub target_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum ModelArg {
    Full,
    FreeSpace,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// G(x, y) with its tail bound
    Green {
        #[arg(long)]
        rho: f64,
        #[arg(long, value_parser = parse_point)]
        x: Point4,
        #[arg(long, value_parser = parse_point)]
        y: Point4,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// τ(x), from a point or a radius
    Robin {
        #[arg(long)]
        rho: f64,
        #[arg(long, value_parser = parse_point, conflicts_with = "r", required_unless_present = "r")]
        x: Option<Point4>,
        #[arg(long)]
        r: Option<f64>,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Λ_ℓ(r) of the regular k-gon over a radius grid, written as CSV
    RingScan {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        rho: f64,
        /// Number of radii
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Bisection on ρ for the sign change of min_r Λ₁
    Threshold {
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "full")]
        model: ModelArg,
        #[arg(long, default_value_t = 0.01)]
        lo: f64,
        #[arg(long, default_value_t = 0.99)]
        hi: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Radii per scan
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Reduced system, rates and residuals for a configuration file
    Reduce {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated ε values; replaces the file's list
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<f64>,
        /// Run the critical-point search first
        #[arg(long)]
        search: bool,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Ansatz profile on the x₁x₂ slice, written as CSV plus a JSON sidecar
    Profile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Grid points per axis
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        series: SeriesArgs,
    },
}

fn parse_point(s: &str) -> Result<Point4, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!(
            "expected 4 comma-separated coordinates, got {}",
            parts.len()
        ));
    }
    let mut p: Point4 = [0.0; 4];
    for (c, txt) in p.iter_mut().zip(&parts) {
        *c = txt.parse().map_err(|_| format!("not a number: {txt:?}"))?;
        if !c.is_finite() {
            return Err(format!("coordinate must be finite: {txt:?}"));
        }
    }
    Ok(p)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Green { .. } => "green",
        Command::Robin { .. } => "robin",
        Command::RingScan { .. } => "ring-scan",
        Command::Threshold { .. } => "threshold",
        Command::Reduce { .. } => "reduce",
        Command::Profile { .. } => "profile",
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set up worker pool: {e}")))?;
    }
    let t0 = Instant::now();
    let done = commands::dispatch(&cli.command)?;
    if let Some(text) = &done.stdout {
        println!("{text}");
    }
    if let Some(path) = &cli.record {
        let mut outputs = done.outputs.clone();
        if let Some(text) = &done.stdout {
            outputs.push(record::OutputEntry {
                path: PathBuf::from("-"),
                bytes: text.len() + 1,
                sha256: output::sha256_hex(format!("{text}\n").as_bytes()),
            });
        }
        let config = serde_json::json!({ "args": &cli.command, "resolved": done.resolved });
        record::RunRecord::new(command_name(&cli.command), config, t0.elapsed(), outputs)
            .write(path)?;
    }
    match done.failure {
        Some(msg) => Err(CliError::Numerical(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("0.7, 0,0,0").unwrap(), [0.7, 0.0, 0.0, 0.0]);
        assert!(parse_point("1,2,3").is_err());
        assert!(parse_point("1,2,x,4").is_err());
        assert!(parse_point("1,2,inf,4").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::Core(brl_core::Error::Domain("x".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::Core(brl_core::Error::NotSimple(0.0)).exit_code(),
            3
        );
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 3);
    }
}
