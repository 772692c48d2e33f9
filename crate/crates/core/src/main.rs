use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use icqkd::analysis::{SeedMode, SweepParameter};
use icqkd::cli::{self, ExitStatus, RunOptions};
use icqkd::{load_config, Error, SessionConfig};

#[derive(Parser)]
#[command(name = "icqkd", version, about = "Intrinsic-correlation QKD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Session config file (`key = value` lines)
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress and report output on stdout
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session
    Run {
        #[command(flatten)]
        common: Common,
        /// Include hidden variables (source phase, Eve) in the transcript
        #[arg(long)]
        audit: bool,
        /// Per-round CSV transcript path
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// JSON report path (stdout when omitted)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run one session per parameter value
    Sweep {
        #[command(flatten)]
        common: Common,
        /// n_c, transmittance, dark_count_prob or eve
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Directory for point reports and sweep.csv
        #[arg(long, default_value = "sweep-out")]
        out_dir: PathBuf,
        /// Reuse the base seed for every point
        #[arg(long)]
        matched_seeds: bool,
    },
    /// Print the ideal-case outcome of all 16 setting combinations
    TruthTable {
        /// Alice's analyzer angle in degrees
        #[arg(long, default_value_t = 45.0, allow_negative_numbers = true)]
        theta1: f64,
    },
    /// Parse and validate a config, printing it with defaults filled in
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(common: &Common) -> Result<SessionConfig, Error> {
    let mut config = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn execute(cli: Cli) -> Result<ExitStatus, Error> {
    match cli.command {
        Command::Run {
            common,
            audit,
            transcript,
            report,
        } => {
            let config = load(&common)?;
            let opts = RunOptions {
                audit,
                transcript,
                report,
                quiet: common.quiet,
            };
            let out = cli::run(&config, &opts)?;
            if out.report.stats.eve_detection && !common.quiet {
                eprintln!(
                    "abort: error-check rate {:.4} exceeds threshold {:.4}",
                    out.outcome.check.error_rate.unwrap_or(0.0),
                    out.outcome.check.threshold
                );
            }
            Ok(out.report.exit_status())
        }
        Command::Sweep {
            common,
            param,
            values,
            out_dir,
            matched_seeds,
        } => {
            let config = load(&common)?;
            let parameter = SweepParameter::parse(&param).ok_or_else(|| Error::Config {
                key: "--param".into(),
                message: format!("unknown sweep parameter `{param}`"),
            })?;
            let seeds = if matched_seeds {
                SeedMode::Matched
            } else {
                SeedMode::Independent
            };
            let values: Vec<String> = values
                .into_iter()
                .filter(|v| !v.trim().is_empty())
                .collect();
            let result = cli::run_sweep(&config, parameter, &values, seeds, &out_dir)?;
            if !common.quiet {
                println!(
                    "wrote {} point reports and sweep.csv to {}",
                    result.points.len(),
                    out_dir.display()
                );
            }
            Ok(ExitStatus::Success)
        }
        Command::TruthTable { theta1 } => {
            print!("{}", cli::format_truth_table(theta1));
            Ok(ExitStatus::Success)
        }
        Command::ValidateConfig { config } => {
            let config = load_config(&config)?;
            print!("{}", config.to_text());
            Ok(ExitStatus::Success)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(ExitStatus::of_error(&err).code() as u8)
        }
    }
}
