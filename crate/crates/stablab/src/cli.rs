//! Argument parsing and exit-code mapping.
//!
//! Exit codes: 0 when every checked property held, 1 when one was violated,
//! 2 for usage, configuration or runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Parser, Subcommand};

use crate::commands::{self, Invocation, Outcome};
use crate::config::{BoundsSection, ExperimentConfig};
use crate::parallel::{self, Pool};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

/// Output prefix when neither `--out` nor the config sets one.
pub const DEFAULT_PREFIX: &str = "stablab";

#[derive(Debug, Parser)]
#[command(name = "stablab", version, about = "Uniform argument stability of SGD on approximately smooth losses")]
pub struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output path prefix; files are written as PREFIX.<kind>.<ext>.
    #[arg(long, global = true, value_name = "PREFIX")]
    pub out: Option<String>,
    /// Master seed (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for replicates.
    #[arg(long, global = true, value_name = "N", env = "STABLAB_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate (L, β, η) and check the smoothness and expansiveness properties.
    Certify,
    /// Coupled runs on neighboring datasets: δ_t with bound overlays.
    Stability,
    /// The stability experiment over a grid of ε and/or T.
    Sweep,
    /// Evaluate an analytic bound.
    Bounds {
        /// Bound identifier (e.g. ub_convex); overrides the config's.
        id: Option<String>,
        /// Set an input, e.g. --set eta=0.2 (repeatable).
        #[arg(long = "set", value_name = "K=V")]
        set: Vec<String>,
        /// Tabulate over these horizons, comma separated.
        #[arg(long = "t-grid", value_name = "T1,T2,...", value_delimiter = ',')]
        t_grid: Vec<f64>,
    },
    /// Run the hard instance over a grid of horizons.
    Lowerbound,
}

fn parse_assignment(s: &str) -> Result<(String, f64)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects K=V, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|_| anyhow!("--set {k}: {v:?} is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.command) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Command::Bounds { .. }) => ExperimentConfig::from_json(r#"{"seed": 0}"#)?,
        (None, _) => bail!("this command needs --config PATH"),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Command::Bounds { id, set, t_grid } = &cli.command {
        let mut section = match (cfg.bounds.take(), id) {
            (Some(mut s), Some(id)) => {
                s.id = id.clone();
                s
            }
            (Some(s), None) => s,
            (None, Some(id)) => BoundsSection { id: id.clone(), inputs: Default::default(), t_grid: None },
            (None, None) => bail!("bounds needs an ID or a \"bounds\" config section"),
        };
        for a in set {
            let (k, v) = parse_assignment(a)?;
            section.inputs.insert(k, v);
        }
        if !t_grid.is_empty() {
            section.t_grid = Some(t_grid.clone());
        }
        cfg.bounds = Some(section);
    }
    Ok(cfg)
}

/// Runs a parsed command line; errors become exit code 2.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let config = load_config(cli)?;
    let explicit_prefix = cli.out.clone().or_else(|| config.out.clone());
    let prefix = explicit_prefix.clone().unwrap_or_else(|| DEFAULT_PREFIX.to_string());
    let pool = Pool::new(parallel::resolve_jobs(cli.jobs))?;
    let inv = Invocation { config, prefix, pool };
    match cli.command {
        Command::Certify => commands::certify::run(&inv),
        Command::Stability => commands::stability::run(&inv),
        Command::Sweep => commands::sweep::run(&inv),
        Command::Bounds { .. } => commands::bounds::run(&inv, explicit_prefix.is_none()),
        Command::Lowerbound => commands::lowerbound::run(&inv),
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            for v in &outcome.violations {
                eprintln!("violation: {v}");
            }
            ExitCode::from(if outcome.passed() { EXIT_OK } else { EXIT_VIOLATION })
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
