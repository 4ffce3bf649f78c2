//! Command-line front end: ingestion, stage training, evaluation,
//! explanation and mask-ratio sweeps driven by one run config.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mrp_core::explain::Method;
use mrp_core::training::Stage;
use mrp_core::{Error, Result};

use crate::commands::SynthKind;
use crate::config::{load_assignments, parse_assignment, RunConfig};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "mrp", version, about = "Masked rationale prediction for hate-speech detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key = value config file
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable, applied after the file)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Defaults to $MRP_OUTPUT_DIR, then ./runs
    #[arg(long, global = true)]
    pub output_dir: Option<String>,
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    #[arg(long, global = true)]
    pub split: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate, encode and split a dataset
    Ingest,
    /// Train one stage and write a checkpoint
    Train {
        #[arg(long, value_parser = parse_stage)]
        stage: Stage,
        /// Stage-1 checkpoint to start detection from
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        mask_ratio: Option<f64>,
        /// Checkpoint file stem (default: the stage name)
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate a checkpoint on the test split
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Print token scores for one post
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        id: String,
    },
    /// MRP, detection and evaluation at each mask ratio
    Sweep {
        #[arg(long, default_value = "0.25,0.5,0.75,1.0")]
        ratios: String,
    },
    /// Write a synthetic dataset and split
    Synth {
        #[arg(long, value_enum, default_value = "lexicon")]
        kind: SynthKind,
        #[arg(long, default_value_t = 2000)]
        posts: usize,
    },
}

fn parse_stage(s: &str) -> std::result::Result<Stage, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Cli {
    /// Environment defaults, then the config file, then `--set`, then
    /// dedicated flags.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut pairs = match &self.global.config {
            Some(path) => load_assignments(path)?,
            None => Vec::new(),
        };
        for s in &self.global.set {
            pairs.push(parse_assignment(s)?);
        }
        let g = &self.global;
        let mut flag = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((key.to_string(), v));
            }
        };
        flag("seed", g.seed.map(|s| s.to_string()));
        flag("output_dir", g.output_dir.clone());
        flag("data.dataset", g.dataset.clone());
        flag("data.split", g.split.clone());
        if let Command::Train { init, mask_ratio, .. } = &self.command {
            flag("detect.init_checkpoint", init.clone());
            flag("pretrain.mask_ratio", mask_ratio.map(|r| r.to_string()));
        }
        let mut cfg = RunConfig::from_env();
        cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::Ingest => commands::cmd_ingest(&cfg).map(drop),
        Command::Train { stage, name, .. } => commands::cmd_train(&cfg, *stage, name.as_deref()).map(drop),
        Command::Eval { checkpoint } => commands::cmd_eval(&cfg, checkpoint).map(drop),
        Command::Explain { checkpoint, method, id } => commands::cmd_explain(&cfg, checkpoint, id, *method).map(drop),
        Command::Sweep { ratios } => commands::cmd_sweep(&cfg, &commands::parse_ratios(ratios)?).map(drop),
        Command::Synth { kind, posts } => commands::cmd_synth(&cfg, *kind, *posts).map(drop),
    }
}

/// 0 on success, 3 for numeric failures, 2 for everything else.
pub fn exit_code(result: &Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_numeric() => ExitCode::from(EXIT_NUMERIC),
        Err(_) => ExitCode::from(EXIT_INPUT),
    }
}
