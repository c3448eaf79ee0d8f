use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twostate::commands::{self, Outcome, EXIT_CONFIG};
use twostate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "twostate", version, about = "Coupled two-state Schrödinger experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem and export the trajectory and traces
    Forward { config: PathBuf },
    /// Empirical constant scan of the weighted estimate
    CarlemanScan { config: PathBuf },
    /// Stability ratio study over amplitudes and seeds
    Stability { config: PathBuf },
    /// Linearised reconstruction of a synthetic coefficient pair
    Reconstruct { config: PathBuf },
    /// Check a config file without running anything
    ValidateConfig { config: PathBuf },
}

fn report(outcome: &Outcome) {
    for (k, v) in &outcome.summary {
        println!("{k} = {v}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for c in &outcome.counterexamples {
        eprintln!("counterexample: {c}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let path = match &cli.command {
        Command::Forward { config }
        | Command::CarlemanScan { config }
        | Command::Stability { config }
        | Command::Reconstruct { config }
        | Command::ValidateConfig { config } => config,
    };
    let cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let dir = commands::output_dir(&cfg);
    let result = match cli.command {
        Command::Forward { .. } => commands::cmd_forward(&cfg, &dir),
        Command::CarlemanScan { .. } => commands::cmd_carleman_scan(&cfg, &dir),
        Command::Stability { .. } => commands::cmd_stability(&cfg, &dir),
        Command::Reconstruct { .. } => commands::cmd_reconstruct(&cfg, &dir),
        Command::ValidateConfig { .. } => commands::cmd_validate(&cfg),
    };
    match result {
        Ok(outcome) => {
            report(&outcome);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
