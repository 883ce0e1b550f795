//! `lamanet` command-line driver.

mod commands;
mod config;
mod data;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lamanet::Variant;

use crate::config::{CliConfig, DataSource};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Data(#[from] lamanet::data::DataError),
    #[error(transparent)]
    Train(#[from] lamanet::TrainError),
    #[error("{failed} of {total} runs failed")]
    RunsFailed { failed: usize, total: usize },
    /// Sweep launch withheld pending `--confirm`; not an error as such.
    #[error("pass --confirm to launch")]
    NeedsConfirm,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::NeedsConfirm => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lamanet", version, about = "Domain-adaptive RUL training and evaluation")]
struct Cli {
    /// TOML configuration file; `lamanet config` prints every key with its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// C-MAPSS directory (overrides LAMANET_DATA_DIR and the config file).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Small model on 8 sensors and 16-cycle windows, for smoke runs.
    #[arg(long, global = true)]
    toy: bool,
    /// Use the built-in generated fleets SYN_S and SYN_T instead of files.
    #[arg(long, global = true)]
    synthetic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the fully resolved configuration as TOML.
    Config,
    /// Parse, normalize and window one subset and write its cache.
    Ingest {
        #[arg(long)]
        subset: String,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Train and evaluate one or more variants on a source→target pair.
    Train {
        /// One variant or a comma-separated list.
        #[arg(long, value_delimiter = ',')]
        variant: Vec<Variant>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the three ablation variants and write comparison tables.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Grid search over loss weights, noise level and reconstruction cell.
    Sweep {
        /// Restrict the grid, e.g. `lambda_m=0.1,0.5`. Dimensions not named
        /// stay at the run config value. Repeatable.
        #[arg(long = "grid", value_name = "KEY=V1,V2")]
        grid: Vec<String>,
        /// Launch after reporting the grid size.
        #[arg(long)]
        confirm: bool,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop each run after this many optimizer steps.
    #[arg(long)]
    max_iterations: Option<u64>,
    /// Skip the per-seed latent CSV export.
    #[arg(long)]
    no_latents: bool,
}

impl RunArgs {
    fn apply(&self, cfg: &mut CliConfig) {
        if let Some(s) = &self.source {
            cfg.run.source = s.clone();
        }
        if let Some(t) = &self.target {
            cfg.run.target = t.clone();
        }
        if !self.seeds.is_empty() {
            cfg.run.seeds = self.seeds.clone();
        }
        if let Some(e) = self.epochs {
            cfg.run.epochs = e;
        }
        if self.max_iterations.is_some() {
            cfg.run.max_iterations = self.max_iterations;
        }
        if self.no_latents {
            cfg.latents = false;
        }
    }
}

fn resolve(cli: &Cli) -> Result<CliConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    if cli.toy {
        cfg.apply_toy();
    }
    if cli.synthetic {
        cfg.data_source = DataSource::Synthetic;
        cfg.run.source = data::SYN_SOURCE.into();
        cfg.run.target = data::SYN_TARGET.into();
    }
    cfg.resolve_data_dir(cli.data_dir.clone());
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(d) = &cli.cache_dir {
        cfg.cache_dir = d.clone();
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    match &cli.command {
        Command::Train { run, variant } => {
            run.apply(&mut cfg);
            if let Some(&v) = variant.first() {
                cfg.run.variant = v;
            }
        }
        Command::Ablate { run } | Command::Sweep { run, .. } => run.apply(&mut cfg),
        Command::Ingest { window: Some(k), .. } => {
            cfg.run.data.window = *k;
            cfg.run.model.window = *k;
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    if cfg.jobs > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
    }
    match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Ingest { subset, .. } => commands::ingest(&cfg, &subset),
        Command::Train { variant, .. } => {
            let variants = if variant.is_empty() { vec![cfg.run.variant] } else { variant };
            commands::train(&cfg, &variants)
        }
        Command::Ablate { .. } => commands::ablate(&cfg),
        Command::Sweep { grid, confirm, .. } => sweep::sweep(&cfg, &grid, confirm),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lamanet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
