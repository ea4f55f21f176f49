//! Command-line front end for the `wordflow` analyses.
//!
//! Every subcommand reads a flat TOML [`RunConfig`], writes TSV tables and a
//! JSON report into the output directory, and embeds the full config echo in
//! that report.

use std::fmt::Display;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "wordflow",
    version,
    about = "Diffusion analysis of word adoption on social networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration. Missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Degree distribution and geographic assortativity.
    NetStats,
    /// Relative infection risk by exposure count, with a shuffle-test null.
    Risk,
    /// Fit the diffusion model to every word.
    Fit,
    /// Likelihood-ratio tests of added features, BH-corrected across words.
    Compare,
    /// Write a synthetic graph, event file and matching run config.
    Simulate,
}

/// A failed run. The variant fixes the exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Analysis(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Analysis(_) => 1,
            Failure::Io(_) => 2,
            Failure::Config(_) => 3,
        }
    }

    pub fn context(self, what: impl Display) -> Self {
        match self {
            Failure::Analysis(m) => Failure::Analysis(format!("{what}: {m}")),
            Failure::Io(m) => Failure::Io(format!("{what}: {m}")),
            Failure::Config(m) => Failure::Config(format!("{what}: {m}")),
        }
    }
}

impl From<wordflow::Error> for Failure {
    fn from(e: wordflow::Error) -> Self {
        use wordflow::Error::*;
        match e {
            Io(_) | Parse { .. } | Json(_) => Failure::Io(e.to_string()),
            _ => Failure::Analysis(e.to_string()),
        }
    }
}

/// Resolves the effective config for `cli`.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        let abs = std::path::absolute(out).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
        cfg.output_dir = abs.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = effective_config(cli)?;
    let go = || match cli.command {
        Command::NetStats => commands::net_stats(&cfg).map(drop),
        Command::Risk => commands::risk(&cfg).map(drop),
        Command::Fit => commands::fit(&cfg).map(drop),
        Command::Compare => commands::compare(&cfg).map(drop),
        Command::Simulate => commands::simulate(&cfg).map(drop),
    };
    match cli.workers {
        None => go(),
        Some(0) => Err(Failure::Config("--workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Config(e.to_string()))?
            .install(go),
    }
}
