use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rclqr::experiment::{baseline, constants, output_dir, run_experiment};
use rclqr::export::to_json;
use rclqr::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "rclqr", version, about = "Risk-constrained structured LQR on networked microgrids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize every requested case and seed, then export results.
    Run {
        config: PathBuf,
        /// Concurrent (case, seed) tasks.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Parse and check a config; print it with all defaults filled in.
    Validate { config: PathBuf },
    /// Riccati solve and its cost and risk values.
    Baseline { config: PathBuf },
    /// Empirical local constants at each case's initial gain.
    Constants { config: PathBuf },
    /// Print the default config.
    Defaults,
}

fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run { config, jobs } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = output_dir(&cfg);
            Ok(to_json(&run_experiment(&cfg, &out, jobs)?))
        }
        Command::Validate { config } => Ok(to_json(&ExperimentConfig::load(&config)?)),
        Command::Baseline { config } => Ok(to_json(&baseline(&ExperimentConfig::load(&config)?)?)),
        Command::Constants { config } => Ok(to_json(&constants(&ExperimentConfig::load(&config)?)?)),
        Command::Defaults => Ok(to_json(&ExperimentConfig::default())),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
