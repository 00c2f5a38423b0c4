//! `wikitox` command-line pipeline.

mod config;
mod error;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::stages::{run_stage, Context, STAGES};

#[derive(Parser)]
#[command(name = "wikitox", version, about = "Personal-attack measurement pipeline for talk-page corpora")]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override `paths.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Revisions to comments.
    Extract,
    /// Drop bot and admin-template comments.
    Filter,
    /// Parse, clean and gate annotations.
    Ingest,
    /// Per-comment label distributions.
    Aggregate,
    /// Train / dev / test / baseline assignment.
    Split,
    /// Train one model with fixed hyperparameters.
    Train,
    /// Random hyperparameter search.
    Tune,
    /// AUC and Spearman on dev and test.
    Evaluate,
    /// Annotator-ensemble baseline.
    Baseline,
    /// Equal-error decision threshold.
    Calibrate,
    /// Score the filtered corpus.
    Score,
    /// Prevalence, activity, toxicity, moderation and NAF reports.
    Analyze,
    /// Every stage from extract to analyze.
    All,
    /// Write a synthetic input corpus.
    Synth,
    /// Print the resolved config, or the embedded defaults.
    Config {
        #[arg(long)]
        defaults: bool,
    },
}

impl Command {
    fn stage(&self) -> Option<&'static str> {
        Some(match self {
            Command::Extract => "extract",
            Command::Filter => "filter",
            Command::Ingest => "ingest",
            Command::Aggregate => "aggregate",
            Command::Split => "split",
            Command::Train => "train",
            Command::Tune => "tune",
            Command::Evaluate => "evaluate",
            Command::Baseline => "baseline",
            Command::Calibrate => "calibrate",
            Command::Score => "score",
            Command::Analyze => "analyze",
            Command::Synth => "synth",
            Command::All | Command::Config { .. } => return None,
        })
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let path = cli.config.as_deref().ok_or(CliError::Config {
        key: Some("--config"),
        message: "a config file is required".into(),
    })?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.output_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Config { defaults: true } = cli.command {
        print!("{}", PipelineConfig::defaults_toml());
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    if let Command::Config { .. } = cli.command {
        print!("{}", toml::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config {
                key: Some("--threads"),
                message: e.to_string(),
            })?;
    }
    let out = cfg.require("paths.output_dir")?.to_path_buf();
    let ctx = Context { config: &cfg, out: &out };
    match cli.command.stage() {
        Some(stage) => run_stage(stage, &ctx),
        None => STAGES.iter().try_for_each(|s| run_stage(s, &ctx)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
