use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use osm_lab_cli::{run, Mode, RunConfig};

#[derive(Parser)]
#[command(
    name = "osm-lab",
    version,
    about = "Skeleton-formulation Schwarz solver for 2D Helmholtz"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the skeleton equation and write the solution and residual history.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every invariant suite on the configured problem.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute the constants of the convergence theory.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
    /// Iteration counts for rotated impedances `e^{-iθ}T`.
    SweepTheta {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, path) = match cli.command {
        Command::Solve { config } => (Mode::Solve, config),
        Command::Verify { config } => (Mode::Verify, config),
        Command::Constants { config } => (Mode::Constants, config),
        Command::SweepTheta { config } => (Mode::SweepTheta, config),
    };
    let result = RunConfig::load(&path).and_then(|config| run(&config, mode));
    match result {
        Ok(outcome) => {
            eprintln!("{}: {}", mode.name(), outcome.message);
            for a in &outcome.artifacts {
                eprintln!("  wrote {}", a.display());
            }
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
