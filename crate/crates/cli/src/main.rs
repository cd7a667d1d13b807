use clap::{Parser, Subcommand};
use fluxon_cli::commands::{cmd_ensemble, cmd_probe, cmd_run, cmd_validate, CommandError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Deterministic 2D kinematic simulator of topological internal-angle
/// transport through random trivial-charge baths.
#[derive(Parser)]
#[command(name = "fluxon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Master seed override (otherwise the config seed is used).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for trace.csv and report.txt.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run an ensemble of seeds derived from the master seed.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        count: usize,
        /// Worker threads; results are identical for any value.
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the locality probe: per-candidate distributions plus the
    /// self-calibrated distinguishability summary.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Parse and validate a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn read_config(path: &PathBuf) -> Result<String, CommandError> {
    std::fs::read_to_string(path).map_err(CommandError::Io)
}

fn run() -> Result<bool, CommandError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => {
            let text = read_config(&config)?;
            let pass = cmd_run(&text, seed, &out)?;
            println!(
                "run {}: artifacts in {}",
                if pass { "passed" } else { "FAILED checks" },
                out.display()
            );
            Ok(pass)
        }
        Command::Ensemble {
            config,
            count,
            parallelism,
            seed,
            out,
        } => {
            let text = read_config(&config)?;
            let pass = cmd_ensemble(&text, count, parallelism, seed, &out)?;
            println!(
                "ensemble of {count} {}: artifacts in {}",
                if pass { "passed" } else { "FAILED checks" },
                out.display()
            );
            Ok(pass)
        }
        Command::Probe {
            config,
            parallelism,
            seed,
            out,
        } => {
            let text = read_config(&config)?;
            let pass = cmd_probe(&text, seed, parallelism, &out)?;
            println!(
                "probe {}: artifacts in {}",
                if pass { "passed" } else { "FAILED checks" },
                out.display()
            );
            Ok(pass)
        }
        Command::Validate { config } => {
            let text = read_config(&config)?;
            let cfg = cmd_validate(&text)?;
            println!("config ok: {} experiment", cfg.run.experiment);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
