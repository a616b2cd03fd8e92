use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nhadiabatic::cli::{
    emit_report, exit_code, load_config, run_experiment, CliError, JobKind, OutputFormat,
};

/// Adiabatic-limit experiments for non-Hermitian Hamiltonians with real spectra.
#[derive(Parser)]
#[command(name = "nhadiabatic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the error rate and check it, the hypotheses and the norm bound.
    Verify(Common),
    /// Tabulate the adiabatic error over the configured time scales.
    Sweep(Common),
    /// Dynamic and Berry phases, split cyclically on closed loops.
    Phase(Common),
    /// Compare empirical propagator norms with the certified bound.
    Bound(Common),
    /// Run a study outside the spectral hypotheses without asserting a rate.
    Diagnostic(Common),
    /// Run the job named in the config file.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(short, long)]
    config: PathBuf,
    /// Report destination (overrides `output.path`; default stdout).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Report format (overrides `output.format`).
    #[arg(short, long, value_enum)]
    format: Option<OutputFormat>,
    /// Seed for randomized checks (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (job, common) = match cli.command {
        Command::Verify(c) => (Some(JobKind::Verify), c),
        Command::Sweep(c) => (Some(JobKind::Sweep), c),
        Command::Phase(c) => (Some(JobKind::Phase), c),
        Command::Bound(c) => (Some(JobKind::Bound), c),
        Command::Diagnostic(c) => (Some(JobKind::Diagnostic), c),
        Command::Run(c) => (None, c),
    };
    let code = match execute(job, &common) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn execute(job: Option<JobKind>, common: &Common) -> Result<i32, CliError> {
    let mut config = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let job = config.resolve_job(job)?;
    let format = common.format.unwrap_or(config.output.format);
    let destination = common.out.clone().or_else(|| config.output.path.clone());

    let result = run_experiment(&config, job);
    let code = exit_code(&result);
    let envelope = result?;
    let mut sink: Box<dyn Write> = match &destination {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Output(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    emit_report(&envelope, format, &mut sink)?;
    if !envelope.verdict.passed {
        for check in envelope.verdict.checks.iter().filter(|c| c.required && !c.passed) {
            eprintln!("check failed: {}: {}", check.name, check.detail);
        }
    }
    Ok(code)
}
