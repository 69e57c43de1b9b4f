use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cqnls::commands::{self, Report};
use cqnls::config::RunConfig;
use cqnls::env::{Env, DEFAULT_OUT, OUT_ENV};
use cqnls::error::{CliError, CliResult};

/// Radial cubic-quintic NLS: ground states, spectra, threshold dynamics.
#[derive(Debug, Parser)]
#[command(name = "cqnls", version)]
struct Cli {
    /// Output root directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = DEFAULT_OUT)]
    out: PathBuf,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (`key=value`); repeatable.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the ground state Q_ω and write its fixture.
    Groundstate(commands::GroundStateArgs),
    /// Continue the ground-state branch over a frequency range.
    Branch(commands::BranchArgs),
    /// Internal mode and spectral relations (needs the ground-state fixture).
    Spectrum(commands::SpectrumArgs),
    /// Time evolution with diagnostics.
    Evolve(commands::EvolveArgs),
    /// Special solution: series data, forward decay or backward fate.
    Special(commands::SpecialArgs),
    /// Classify the special-solution data in one time direction.
    Classify(commands::ClassifyArgs),
    /// Classify special solutions over frequencies, amplitudes, directions.
    Sweep(commands::SweepArgs),
    /// Classify the twelve threshold initial conditions.
    Trichotomy(commands::TrichotomyArgs),
    /// Run the invariant suite.
    Check(commands::CheckArgs),
    /// Recompute the reference oracle values.
    Oracle(commands::OracleArgs),
}

fn build_env(cli: &Cli) -> CliResult<Env> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    for kv in &cli.set {
        config.apply_override(kv)?;
    }
    Ok(Env { out: cli.out.clone(), config, workers: cli.workers })
}

fn dispatch(env: &Env, cmd: &Command) -> CliResult<Report> {
    match cmd {
        Command::Groundstate(a) => commands::groundstate(env, a),
        Command::Branch(a) => commands::branch(env, a),
        Command::Spectrum(a) => commands::spectrum(env, a),
        Command::Evolve(a) => commands::evolve_cmd(env, a),
        Command::Special(a) => commands::special(env, a),
        Command::Classify(a) => commands::classify_cmd(env, a),
        Command::Sweep(a) => commands::sweep(env, a),
        Command::Trichotomy(a) => commands::trichotomy(env, a),
        Command::Check(a) => commands::check(env, a),
        Command::Oracle(a) => commands::oracle(env, a),
    }
}

fn fail(e: &CliError) -> ExitCode {
    let names = match e {
        CliError::Invariant(n) => n.clone(),
        _ => Vec::new(),
    };
    let json = serde_json::json!({
        "error": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
        "failed_checks": names,
    });
    eprintln!("{json}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let env = match build_env(&cli) {
        Ok(env) => env,
        Err(e) => return fail(&e),
    };
    if cli.print_config {
        print!("{}", env.config.render());
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = &cli.command else {
        eprintln!("no subcommand given; see --help");
        return ExitCode::from(2);
    };
    match dispatch(&env, cmd) {
        Ok(report) => {
            print!("{}", report.text);
            match &report.failure {
                Some(e) => fail(e),
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => fail(&e),
    }
}
