use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hsflow_cli::commands::{self, Outcome};
use hsflow_cli::RunConfig;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Boundary-integral simulator for capillarity-driven Hele-Shaw flow.
///
/// Exit codes: 0 success, 2 configuration error, 3 runtime abort,
/// 4 validation failure. HSFLOW_THREADS sets the worker thread count.
#[derive(Parser)]
#[command(name = "hsflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured profile and write diagnostics and snapshots.
    Simulate { config: PathBuf },
    /// Run the conformance suite.
    Validate {
        config: PathBuf,
        /// Perturb one entry of the assembled double-layer matrix by 1e-3.
        #[arg(long)]
        debug_corrupt_matrix: bool,
    },
    /// Finite-difference linearization spectrum of the evolution operator.
    Spectrum { config: PathBuf },
    /// Pressure and velocity at interior points.
    Field { config: PathBuf },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("HSFLOW_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("HSFLOW_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().map_err(Outcome::ConfigError).and_then(|_| {
        let path = match &cli.command {
            Command::Simulate { config }
            | Command::Spectrum { config }
            | Command::Field { config } => config,
            Command::Validate { config, .. } => config,
        };
        let cfg = RunConfig::load(path)?;
        Ok(match cli.command {
            Command::Simulate { .. } => commands::simulate(&cfg),
            Command::Validate {
                debug_corrupt_matrix,
                ..
            } => commands::validate(&cfg, debug_corrupt_matrix),
            Command::Spectrum { .. } => commands::spectrum(&cfg),
            Command::Field { .. } => commands::field(&cfg),
        })
    });
    let outcome = outcome.unwrap_or_else(|e: Outcome| e);
    match &outcome {
        Outcome::Success => {}
        Outcome::ConfigError(m) => eprintln!("configuration error: {m}"),
        Outcome::RuntimeAbort(m) => eprintln!("run aborted: {m}"),
        Outcome::ValidationFailed(k) => eprintln!("validation failed: {k} checks"),
    }
    ExitCode::from(outcome.exit_code())
}
