//! Command-line front end.

pub mod commands;
pub mod config;
pub mod error;
pub mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::SplitChoice;
use config::{Overrides, RunConfig};
use error::{CliError, CliResult, ErrorCode};

pub const LOG_ENV: &str = "PROTOLENS_LOG";

#[derive(Debug, Parser)]
#[command(name = "protolens", version, about = "Prototype explanations for random forests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Split and forest seed, overriding `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split the dataset and train the forest.
    Train,
    /// Write per-row attributions for both splits.
    Attribute,
    /// Select prototypes from the training split.
    Select,
    /// Explain instances against their nearest prototype (JSON lines).
    Explain {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitChoice,
        /// Comma-separated row indices within the split; all rows if omitted.
        #[arg(long, value_delimiter = ',')]
        instances: Vec<usize>,
    },
    /// Surrogate and baseline fidelity plus mask statistics.
    Evaluate,
    /// Run the configured grid and summarize it.
    Sweep,
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::new(ErrorCode::Usage, "--config is required"))?;
    let cfg = RunConfig::load(
        path,
        &Overrides {
            out: cli.out.clone(),
            seed: cli.seed,
        },
    )?;
    match &cli.command {
        Command::Train => commands::cmd_train(&cfg),
        Command::Attribute => commands::cmd_attribute(&cfg),
        Command::Select => commands::cmd_select(&cfg),
        Command::Explain { split, instances } => commands::cmd_explain(&cfg, *split, instances),
        Command::Evaluate => commands::cmd_evaluate(&cfg),
        Command::Sweep => sweep::cmd_sweep(&cfg),
    }
}

fn run_cli(cli: &Cli) -> CliResult<()> {
    let threads = cli.threads.unwrap_or(0);
    if cli.threads == Some(0) {
        return Err(CliError::new(ErrorCode::Usage, "--threads must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::new(ErrorCode::Usage, e.to_string()))?;
    pool.install(|| dispatch(cli))
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures are printed to stderr as a single JSON object.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let message = e.render().to_string();
            eprintln!("{}", CliError::new(ErrorCode::Usage, message.trim()).to_json());
            return 1;
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}
