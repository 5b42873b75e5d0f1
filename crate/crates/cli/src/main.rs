//! `overlap`: run the synthetic overlap-density experiments and verifiers.

mod commands;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::{ConfigError, Violations};

#[derive(Parser, Debug)]
#[command(
    name = "overlap",
    version,
    about = "Overlap-density experiments, detection and bound verifiers"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed; experiments run this single seed instead of the configured list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a labeled dataset from the mixture.
    GenData,
    /// Split a dataset into hard-only, easy-only and overlap rows.
    Detect {
        /// Dataset CSV from `gen-data`; sampled from the config when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Weak model JSON; trained on a fresh sample when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Single change point of one numeric CSV column.
    Changepoint {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "score")]
        column: String,
        #[arg(long, default_value_t = overlap_core::changepoint::DEFAULT_MIN_SEGMENT)]
        min_segment: usize,
    },
    /// UCB / random / oracle source selection.
    Select,
    /// Overlap-count sweep.
    Mechanism {
        /// Train on detected overlap rows instead of ground-truth tags.
        #[arg(long)]
        detected: bool,
    },
    /// Vary the easy-only count with hard-only and overlap held fixed
    AblateEasy,
    /// Vary the hard-only count with easy-only and overlap held fixed
    AblateHard,
    /// Replace overlap points with easy-only or hard-only noise
    AblateNoise,
    /// Check the expansion-based correction and coverage bounds on random graphs
    VerifyExpansion,
    /// Check the smooth-data expansion and reverse-overlap bounds
    VerifySmooth,
    /// Monte-Carlo check of the overlap-score tail bounds
    VerifyConcentration,
    /// Mean and std over seeds of raw run CSVs (manifests must sit alongside).
    Summarize {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::GenData => commands::gen_data(g),
        Command::Detect { input, model } => commands::detect(g, input.as_deref(), model.as_deref()),
        Command::Changepoint {
            input,
            column,
            min_segment,
        } => commands::changepoint(g, &input, &column, min_segment),
        Command::Select => commands::experiment(g, commands::Which::Selection, false),
        Command::Mechanism { detected } => {
            commands::experiment(g, commands::Which::Mechanism, detected)
        }
        Command::AblateEasy => commands::experiment(g, commands::Which::EasyAblation, false),
        Command::AblateHard => commands::experiment(g, commands::Which::HardAblation, false),
        Command::AblateNoise => commands::experiment(g, commands::Which::Noise, false),
        Command::VerifyExpansion => verify::expansion(g),
        Command::VerifySmooth => verify::smooth(g),
        Command::VerifyConcentration => verify::concentration(g),
        Command::Summarize { runs } => commands::summarize(g, &runs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Violations>().is_some() {
                ExitCode::from(3)
            } else if e.downcast_ref::<ConfigError>().is_some() || is_config(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn is_config(e: &anyhow::Error) -> bool {
    use overlap_core::Error;
    matches!(
        e.downcast_ref::<Error>(),
        Some(Error::Config(_) | Error::InvalidSpec(_) | Error::MixedConfigs)
    )
}
