//! `arrivalcast` command-line driver.
//!
//! Exit codes: 0 on success, 1 when every requested model failed, 2 for
//! usage, configuration and input-data errors.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "arrivalcast", version, about = "Hourly patient-arrival forecasting")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate an admissions CSV into hourly counts over the split window.
    Ingest {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate hourly counts from the weekly intensity profile.
    Synth(SynthArgs),
    /// Fit one model on the training span and save its fitted state.
    Train {
        #[arg(long)]
        model: String,
    },
    /// Rolling evaluation of one model.
    Evaluate {
        #[arg(long)]
        model: String,
    },
    /// Rolling evaluation of every configured model with a full report.
    Compare {
        /// Comma-separated model names; defaults to the configured list.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
    /// Forecast the hours following the end of the available data.
    Forecast {
        #[arg(long)]
        model: String,
        #[arg(long)]
        horizon: Option<usize>,
        /// Previously saved LSTM weights; skips training.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Whole weeks to simulate, starting on a Monday.
    #[arg(long)]
    pub weeks: Option<usize>,
    /// Hourly counts CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a synthetic hourly maximum-temperature CSV.
    #[arg(long)]
    pub weather_out: Option<PathBuf>,
    /// Mean arrivals per hour over the week.
    #[arg(long)]
    pub base: Option<f64>,
    /// Relative height of the 08:00 surge.
    #[arg(long)]
    pub morning_amp: Option<f64>,
    /// Relative height of the 19:00-20:00 surge.
    #[arg(long)]
    pub evening_amp: Option<f64>,
    /// Rate multiplier for Friday and Saturday.
    #[arg(long)]
    pub weekend_factor: Option<f64>,
    /// Extra multiplier from Friday to Saturday sundown.
    #[arg(long)]
    pub shabbat_factor: Option<f64>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<arrivalcast::Error> for CliError {
    fn from(e: arrivalcast::Error) -> Self {
        Self::usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
