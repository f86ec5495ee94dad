use std::io::{self, Write};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kslab_cli::classify::{cmd_classify, ClassifyArgs};
use kslab_cli::constants::{cmd_constants, ConstantsArgs};
use kslab_cli::semigroup::{cmd_verify_semigroup, SemigroupArgs};
use kslab_cli::simulate::{cmd_simulate, SimulateArgs};
use kslab_cli::sweep::{cmd_sweep, SweepArgs};
use kslab_cli::{exit, CliError};

/// Numerical laboratory for the degenerate Keller-Segel system.
#[derive(Parser, Debug)]
#[command(name = "kslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the sharp constants and global-existence thresholds.
    Constants(ConstantsArgs),
    /// Classify initial data against the thresholds.
    Classify(ClassifyArgs),
    /// Run one configuration and write diagnostics.
    Simulate(SimulateArgs),
    /// Check the heat-semigroup smoothing estimates on random Gaussians.
    VerifySemigroup(SemigroupArgs),
    /// Run a grid of configurations and aggregate the results.
    Sweep(SweepArgs),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(text) = std::env::var("KS_THREADS") else {
        return Ok(());
    };
    let threads: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("KS_THREADS must be a positive integer, got `{text}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    init_threads()?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut err = io::stderr();
    let code = match &cli.command {
        Command::Constants(a) => cmd_constants(a, &mut out)?,
        Command::Classify(a) => cmd_classify(a, &mut out)?,
        Command::Simulate(a) => cmd_simulate(a)?,
        Command::VerifySemigroup(a) => cmd_verify_semigroup(a, &mut out, &mut err)?,
        Command::Sweep(a) => cmd_sweep(a, &mut err)?,
    };
    out.flush().map_err(|e| CliError::io("writing output", e))?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::INVALID } else { exit::OK });
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
