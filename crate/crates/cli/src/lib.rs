//! Command-line pipeline: ingest, classify, aggregate, score, validate,
//! report and sweep, each resumable and guarded against config drift.

pub mod error;
pub mod remote;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use workscope::config::ConfigError;

use crate::error::Result;
use crate::stages::{parse_thresholds, Run};

#[derive(Debug, Parser)]
#[command(name = "workscope", version, about = "Occupational AI applicability scoring pipeline")]
pub struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArg {
    /// Run config (TOML). Relative paths inside resolve against its directory.
    #[arg(short, long, default_value = "run.toml")]
    pub config: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load O*NET, the SOC crosswalk and OEWS figures; validate the corpora.
    Ingest(ConfigArg),
    /// Label sampled conversations with the configured backend. Resumes from
    /// the last checkpoint.
    Classify {
        #[command(flatten)]
        config: ConfigArg,
        /// Discard existing labels and checkpoints first.
        #[arg(long)]
        fresh: bool,
    },
    /// Per-IWA activity share, completion, scope and feedback statistics.
    Aggregate(ConfigArg),
    /// Occupation weights and applicability scores.
    Score(ConfigArg),
    /// Rater agreement, or candidate sets to annotate when no annotations
    /// file is configured.
    Validate(ConfigArg),
    /// Render report tables and the manifest.
    Report(ConfigArg),
    /// Rank correlation of scores across coverage thresholds.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated coverage thresholds.
        #[arg(long, default_value = workscope::report::DEFAULT_SWEEP_THRESHOLDS)]
        thresholds: String,
    },
    /// Run every stage in order.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        fresh: bool,
    },
    /// Show which stage outputs match the current config.
    Status(ConfigArg),
    /// Write the synthetic fixture (taxonomy, corpora, rules, run.toml).
    Synth {
        /// Output directory.
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        conversations: usize,
    },
}

/// Executes one command and returns the lines to print.
pub fn execute(command: Command) -> Result<Vec<String>> {
    let load = |c: &ConfigArg| Run::load(&c.config);
    Ok(match command {
        Command::Ingest(c) => vec![load(&c)?.ingest()?],
        Command::Classify { config, fresh } => vec![load(&config)?.classify(fresh)?],
        Command::Aggregate(c) => vec![load(&c)?.aggregate()?],
        Command::Score(c) => vec![load(&c)?.score()?],
        Command::Validate(c) => vec![load(&c)?.validate()?],
        Command::Report(c) => vec![load(&c)?.report()?],
        Command::Sweep { config, thresholds } => {
            let thresholds = parse_thresholds(&thresholds)
                .map_err(|e| ConfigError::Invalid(format!("--thresholds: {e}")))?;
            vec![load(&config)?.sweep(&thresholds)?]
        }
        Command::Run { config, fresh } => load(&config)?.run_all(fresh)?,
        Command::Status(c) => {
            let run = load(&c)?;
            run.status()?.into_iter().map(|(s, state)| format!("{:<10} {state}", s.name())).collect()
        }
        Command::Synth { out, seed, conversations } => {
            let cfg = workscope::synth::SynthConfig { seed, conversations, ..Default::default() };
            workscope::synth::generate(&out, &cfg)?;
            vec![format!("synth: wrote fixture to {}", out.display())]
        }
    })
}
