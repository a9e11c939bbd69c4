use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polarsim::io::{self, CliError};

#[derive(Parser)]
#[command(
    name = "polarsim",
    version,
    about = "Stochastic message-exchange simulator with polarization, plus metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write a full report bundle
    Simulate {
        /// TOML configuration file
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the report bundle
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics from a stored event log
    Metrics {
        /// Bundle directory or its events.csv
        #[arg(long)]
        log: PathBuf,
        /// Inclusive step window, e.g. 1..8000
        #[arg(long)]
        window: String,
        /// Group ratio series: two values, top=<a..b> bottom=<c..d>
        #[arg(long, num_args = 2)]
        ratio: Option<Vec<String>>,
        /// Checkpoint interval for the ratio series
        #[arg(long, default_value_t = 1000)]
        interval: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one two-phase simulation per seed and aggregate medians
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seed list, or a count (base seed from config)
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out } => io::cmd_simulate(&config, &out),
        Command::Metrics {
            log,
            window,
            ratio,
            interval,
            out,
        } => {
            let window = io::parse_range(&window)?;
            let groups = match ratio {
                Some(parts) => {
                    let top = io::parse_group(&parts[0], "top")?;
                    let bottom = io::parse_group(&parts[1], "bottom")?;
                    Some((top, bottom))
                }
                None => None,
            };
            io::cmd_metrics(&log, window, groups, interval, &out)
        }
        Command::Sweep { config, seeds, out } => io::cmd_sweep(&config, seeds.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("polarsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
