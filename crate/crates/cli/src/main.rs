mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ConfigError;

#[derive(Parser)]
#[command(name = "esans", version, about = "Semantic-aware negative sampling pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run config; every key is optional.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum View {
    Image,
    Text,
    Behavior,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print it with every default filled in.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a planted-cluster dataset.
    SynthData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn the behavior modality from co-occurrences in the interaction log.
    PretrainBehavior {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train alignment projections and cascaded codebooks.
    TrainMsac {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Behavior table to use instead of `<data>/behavior.emb`.
        #[arg(long)]
        behavior: Option<PathBuf>,
        /// Feed one modality to all three views.
        #[arg(long, value_enum)]
        single_modality: Option<View>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign every item to its primary cluster and secondary cell.
    BuildIndex {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        msac: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the two towers on the training split.
    TrainEbr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Required by the esans strategy.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recall@K of a checkpoint on the held-out interactions.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate baselines and ablations on one split.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        single_modality_index: Option<PathBuf>,
        /// Comma-separated method names, overriding `eval.methods`.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump negative draws as JSON lines.
    SampleInspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        index: Option<PathBuf>,
        /// Item ids to draw for; defaults to a seeded sample of `--count` items.
        #[arg(long, value_delimiter = ',')]
        items: Option<Vec<String>>,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Directory for `draws.jsonl`; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ESANS_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("{c}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}
