//! Subcommand implementations. Each returns the files it wrote and whether
//! every checked property held; `main` maps that onto the exit code.

use std::path::PathBuf;

use crate::config::ExperimentConfig;
use crate::parallel::Pool;

pub mod bounds;
pub mod certify;
pub mod lowerbound;
pub mod stability;
pub mod sweep;

/// Resolved invocation: config after `--seed` override, output prefix, pool.
pub struct Invocation {
    pub config: ExperimentConfig,
    pub prefix: String,
    pub pool: Pool,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Human-readable descriptions of failed properties; empty on success.
    pub violations: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.violations.push(what.into());
        }
    }
}
