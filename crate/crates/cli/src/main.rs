use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod table;

use config::Settings;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "linktime", version, about = "Bus link travel-time inference, modelling and remaining-time prediction")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Infer per-link travel-time observations from GTFS and pings
    Infer,
    /// Fit per-link road-time models and dwell/intersection components
    Fit,
    /// Goodness-of-fit, heteroscedasticity and independence tests per link
    Validate,
    /// Point predictions and bounds from the fitted models
    Predict {
        /// Covariates as rain,peak,weekday,traffic bits, e.g. 0,1,1,0; all combinations if omitted
        #[arg(long)]
        covariates: Option<String>,
    },
    /// Remaining-time simulation for one trip at one moment
    Simulate {
        #[arg(long)]
        trip: String,
        /// Unix timestamp
        #[arg(long)]
        at: i64,
        /// Re-predict at every traffic-indicator flip up to `--at`
        #[arg(long)]
        replay: bool,
    },
    /// Compare the log-normal model with historical-mean and linear baselines
    Evaluate,
    /// Generate a synthetic corpus with known ground truth
    Synth {
        /// Truth file with link, dwell and intersection records
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Service days to generate
        #[arg(long)]
        days: Option<usize>,
        /// Seconds between pings
        #[arg(long)]
        ping_interval: Option<i64>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let cfg = cli.settings.with_config_file()?.resolve()?;
    match cli.command {
        Command::Infer => commands::infer::run(&cfg),
        Command::Fit => commands::fit::run(&cfg),
        Command::Validate => commands::validate::run(&cfg),
        Command::Predict { covariates } => commands::predict::run(&cfg, covariates.as_deref()),
        Command::Simulate { trip, at, replay } => commands::simulate::run(&cfg, &trip, at, replay),
        Command::Evaluate => commands::evaluate::run(&cfg),
        Command::Synth {
            truth,
            days,
            ping_interval,
        } => commands::synth::run(&cfg, truth.as_deref(), days, ping_interval),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            // A closed pipe is not an error worth reporting.
            let _ = out.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
