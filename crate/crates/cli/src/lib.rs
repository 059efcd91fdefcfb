//! Command-line driver: ingest a corpus, train models, expand keywords,
//! generate poems and score lines, all driven by one config file.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use verse_core::corpus::Mode;
use verse_core::keywords::Strategy;

pub use commands::Which;
pub use config::{EngineConfig, Overrides};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "verse", version, about = "Keyword-seeded poem generation")]
pub struct Cli {
    /// Engine config file.
    #[arg(long, global = true, default_value = "verse.toml")]
    pub config: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Keyword expansion: none, frequency or cooccurrence.
    #[arg(long, global = true)]
    pub strategy: Option<Strategy>,
    /// Lines per poem.
    #[arg(long, global = true)]
    pub lines: Option<usize>,
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    #[arg(long, global = true)]
    pub max_len: Option<usize>,
    #[arg(long, global = true)]
    pub model_dir: Option<PathBuf>,
    /// Provenance record path (generate).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build vocabulary and statistics tables from the corpus.
    Ingest,
    /// Train models and calibrate fluency thresholds.
    Train {
        #[arg(value_enum, default_value = "all")]
        which: Which,
    },
    /// Print the assembled keyword set with origins.
    Expand,
    /// Generate poems from the tag file.
    Generate {
        /// Number of poems.
        #[arg(long, default_value_t = 1)]
        poems: usize,
    },
    /// Print fluency scores and a verdict for each line of a file.
    Score { input: PathBuf },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            mode: self.mode,
            strategy: self.strategy,
            lines: self.lines,
            top_n: self.top_n,
            max_len: self.max_len,
            model_dir: self.model_dir.clone(),
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut config = EngineConfig::load(&cli.config)?;
    config.apply(&cli.overrides())?;
    match &cli.command {
        Command::Ingest => commands::ingest(&config),
        Command::Train { which } => commands::train(&config, *which),
        Command::Expand => commands::expand(&config),
        Command::Generate { poems } => {
            if *poems == 0 {
                return Err(CliError::Config("--poems must be positive".into()));
            }
            commands::generate(&config, *poems, cli.out.as_deref())
        }
        Command::Score { input } => commands::score(&config, input),
    }
}
