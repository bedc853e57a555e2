//! `forcesight` — transparent fault detection for force curves.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Parser)]
#[command(
    name = "forcesight",
    version,
    about = "Train, explain and validate a transparent fault-detection model for force curves"
)]
struct Cli {
    /// Declarative run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Caps the worker thread count (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Stdout format for tabular output.
    #[arg(long, global = true, value_enum, default_value_t)]
    format: OutputFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load or generate the dataset, preprocess it and persist the split.
    Prepare,
    /// Grid-search (or fixed-fit) the forest on the train partition.
    Train,
    /// Explain instances: attributions, phase summaries, SVGs.
    Explain {
        /// Explain only these instance ids (default: the configured scope).
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        /// Model file (default: <out_dir>/forest.json).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the 42-model perturbation study against the base model.
    Selectivity {
        /// Model file (default: <out_dir>/forest.json).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Only run plans with this replacement strategy (zero|random|remove).
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Full pipeline run: prepare, train, explain, selectivity, report files.
    Report,
}

fn main() -> Result<()> {
    let cli = Cli::parse();

    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("cannot configure the worker pool")?;
    }

    let config_path = cli
        .config
        .clone()
        .context("--config <path> is required")?;
    let (mut config, mut snapshot) = RunConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
        snapshot = format!("# seed overridden to {seed} on the command line\n{snapshot}");
    }
    let out_dir = cli.out.clone().unwrap_or_else(|| config.out_dir.clone());
    let settings = config.to_settings()?;

    match &cli.command {
        Command::Prepare => commands::cmd_prepare(&config, &settings, &out_dir, cli.format),
        Command::Train => commands::cmd_train(&config, &settings, &out_dir, cli.format),
        Command::Explain { ids, model } => commands::cmd_explain(
            &config,
            &settings,
            &out_dir,
            model.as_ref(),
            ids,
            cli.format,
        ),
        Command::Selectivity { model, strategy } => commands::cmd_selectivity(
            &config,
            &settings,
            &out_dir,
            model.as_ref(),
            strategy.as_deref(),
            cli.format,
        ),
        Command::Report => commands::cmd_report(&settings, &snapshot, &out_dir, cli.format),
    }
}
