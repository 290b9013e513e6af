mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shortfuse::Error;

#[derive(Parser, Debug)]
#[command(name = "shortfuse", version, about = "Fuse structured covariates with time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Configuration file (`key = value` with sections).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Synth(Wrapped),
    /// Run the conditional-mutual-information fusion test.
    FusionTest(Wrapped),
    /// Train on one 90/10 split and evaluate.
    Train(Wrapped),
    /// Run the nested evaluation protocol and write a report.
    Protocol(Wrapped),
    /// Check analytic gradients of every layer type against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Randomised checks per layer type.
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
    /// Score a dataset with a saved checkpoint.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Wrapped {
    #[command(flatten)]
    common: Common,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig { .. } => 2,
        Error::Data { .. } | Error::Io { .. } => 3,
        Error::Numeric { .. } => 4,
        Error::Shape { .. } | Error::Invariant(_) => 5,
    }
}

fn init_logging() -> Result<(), String> {
    let level = match std::env::var("SHORTFUSE_LOG").as_deref() {
        Err(_) | Ok("info") => log::LevelFilter::Info,
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        Ok(other) => return Err(format!("SHORTFUSE_LOG must be quiet, info or debug, not `{other}`")),
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_logging() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Synth(w) => commands::synth(&w.common),
        Command::FusionTest(w) => commands::fusion_test(&w.common),
        Command::Train(w) => commands::train(&w.common),
        Command::Protocol(w) => commands::protocol(&w.common),
        Command::Gradcheck { common, runs } => commands::gradcheck(&common, runs),
        Command::Predict { common, checkpoint } => commands::predict(&common, &checkpoint),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
