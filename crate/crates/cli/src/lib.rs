//! Command-line front end: `synth`, `optimise`, `apply` and `impact`.
//!
//! Settings come from built-in defaults, then an optional flat config file
//! (`--config`), then flags. Each run writes its outputs plus a
//! `manifest.txt` with the effective configuration and SHA-256 digests of
//! every input and output.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use error::CliError;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "truend",
    version,
    about = "Detect and discard trailing zero-valued balances in loan histories"
)]
pub struct Cli {
    /// Flat key=value config file; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (output does not depend on it)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic portfolio with known true endpoints
    Synth(Flags),
    /// Search the threshold grid for the best-separating b
    Optimise(Flags),
    /// Truncate histories to their true ends at threshold --b
    Apply(Flags),
    /// Compare survival and loss measures before and after treatment
    Impact(Flags),
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    /// Portfolio CSV (the untreated one for `impact`)
    #[arg(long)]
    pub input: Option<String>,
    /// Treated portfolio CSV for `impact`
    #[arg(long)]
    pub after: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: Option<String>,
    /// Comma-separated thresholds, or `default24`
    #[arg(long)]
    pub thresholds: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub min_len: Option<String>,
    /// Objective weight, or `auto` for the contamination midpoint
    #[arg(long)]
    pub w: Option<String>,
    /// Policy threshold for `apply`
    #[arg(long)]
    pub b: Option<String>,
    /// `terminated` or `all`
    #[arg(long)]
    pub scope: Option<String>,
    /// Annual rate for discounting workout recoveries
    #[arg(long)]
    pub discount_rate: Option<String>,
    /// Months shown in survival tables
    #[arg(long)]
    pub horizon: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Also optimise on a clustered subsample of this many accounts
    #[arg(long)]
    pub subsample: Option<String>,
    #[arg(long)]
    pub n_loans: Option<String>,
    #[arg(long)]
    pub tzb_fraction: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        [
            ("input", &self.input),
            ("after", &self.after),
            ("out", &self.out),
            ("thresholds", &self.thresholds),
            ("tau", &self.tau),
            ("min_len", &self.min_len),
            ("w", &self.w),
            ("b", &self.b),
            ("scope", &self.scope),
            ("discount_rate", &self.discount_rate),
            ("horizon", &self.horizon),
            ("seed", &self.seed),
            ("subsample", &self.subsample),
            ("n_loans", &self.n_loans),
            ("tzb_fraction", &self.tzb_fraction),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    let flags = match &cli.command {
        Command::Synth(f) | Command::Optimise(f) | Command::Apply(f) | Command::Impact(f) => f,
    };
    for (key, value) in flags.pairs() {
        cfg.set(key, value)?;
    }
    if let Some(n) = cli.threads {
        cfg.threads = Some(n);
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    let work = || match &cli.command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::Optimise(_) => commands::optimise_cmd(&cfg),
        Command::Apply(_) => commands::apply(&cfg),
        Command::Impact(_) => commands::impact(&cfg),
    };
    match cfg.threads {
        Some(0) => Err(CliError::usage("--threads must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}
