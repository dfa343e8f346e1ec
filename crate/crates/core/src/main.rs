use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kgz_core::energy::DiagnosticsReport;
use kgz_core::fit::fit_envelope;
use kgz_core::harness::{self, checks, RunConfig, RunOutput};
use kgz_core::KgzError;

#[derive(Parser)]
#[command(name = "kgz", version, about = "Klein-Gordon-Zakharov decay and scattering laboratory")]
struct Cli {
    /// Config file (alternative to the positional argument of run/picard/scatter)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `output`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the summary on stdout
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve, run diagnostics and fits, write the report bundle
    Run { config: Option<PathBuf> },
    /// Compare Picard iteration with direct evolution
    Picard { config: Option<PathBuf> },
    /// Build scattering data and residuals
    Scatter { config: Option<PathBuf> },
    /// Run the built-in invariant suite on small fields
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a power-law envelope to one column of a diagnostics CSV
    Fit { csv: PathBuf, column: String, t1: f64, t2: f64 },
}

enum Failure {
    Error(KgzError),
    Checks,
}

impl From<KgzError> for Failure {
    fn from(e: KgzError) -> Self {
        Failure::Error(e)
    }
}

fn load(cli: &Cli, positional: &Option<PathBuf>) -> Result<RunConfig, KgzError> {
    let mut cfg = match positional.as_ref().or(cli.config.as_ref()) {
        Some(p) => RunConfig::load(p)?,
        None => return Err(KgzError::Config("no config file given (positional or --config)".into())),
    };
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn finish(cli: &Cli, out: RunOutput) -> Result<(), Failure> {
    out.write(&out.config.output)?;
    if !cli.quiet {
        print!("{}", out.summary());
        println!("outputs in {}", out.config.output.display());
    }
    if out.passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn threads() -> usize {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("KGZ_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => n.min(avail),
        _ => avail,
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => finish(cli, harness::run(&load(cli, config)?)?),
        Command::Picard { config } => finish(cli, harness::run_picard(&load(cli, config)?)?),
        Command::Scatter { config } => finish(cli, harness::run_scatter(&load(cli, config)?)?),
        Command::Check { seed } => {
            let entries = checks::check_suite(*seed, threads())?;
            if !cli.quiet {
                for e in &entries {
                    println!("{}", e.line());
                }
            }
            if entries.iter().all(|e| e.pass) {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
        Command::Fit { csv, column, t1, t2 } => {
            let report = DiagnosticsReport::from_csv(&std::fs::read_to_string(csv).map_err(KgzError::from)?)?;
            let series = report
                .series(column)
                .ok_or_else(|| KgzError::InvalidArgument(format!("no column `{column}` in {}", csv.display())))?;
            let fit = fit_envelope(&series, *t1, *t2)?;
            println!("{column}: {fit}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => {
            eprintln!("kgz: one or more checks failed");
            ExitCode::from(4)
        }
        Err(Failure::Error(e)) => {
            eprintln!("kgz: {e}");
            ExitCode::from(match e {
                KgzError::Config(_) => 2,
                _ => 3,
            })
        }
    }
}
