//! JSON experiment configuration.
//!
//! One schema serves every subcommand; each reads the sections it needs and
//! reports the ones it is missing. Unknown keys are rejected everywhere and
//! the master seed is mandatory.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use stablab_core::bounds::BoundId;
use stablab_core::engine::Scheme;
use stablab_core::objective::ObjectiveConfig;
use stablab_core::smoothness::{self, BetaPolicy, PairMode};
use stablab_core::stability::{Experiment, IndexMode};
use stablab_core::{ExampleDistribution, Objective, ScheduleSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; replicate `r` runs on `derive_seed(seed, r)`.
    pub seed: u64,
    /// Output path prefix (overridden by `--out`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveConfig>,
    /// Example distribution; a family default is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<ExampleDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    /// Number of seed replicates.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub swa: bool,
    #[serde(default = "default_index_mode")]
    pub index_mode: IndexMode,
    /// Test-set size for generalization-gap estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    /// Force `S' = S`.
    #[serde(default)]
    pub identical: bool,
    /// Also write the trajectory of replicate 0 on `S`.
    #[serde(default)]
    pub trajectory: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_grid: Option<Vec<f64>>,
    #[serde(rename = "T_grid", default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowerbound: Option<LowerBoundSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSection>,
}

fn default_scheme() -> Scheme {
    Scheme::WithReplacement
}

fn default_index_mode() -> IndexMode {
    IndexMode::Randomized
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    #[serde(default = "default_pairs")]
    pub pairs: u64,
    #[serde(default = "default_pair_mode")]
    pub mode: PairMode,
    #[serde(default = "default_beta_policy")]
    pub beta_policy: BetaPolicy,
    /// Step sizes for the update-map checks; `1/β` (or 1) when empty.
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_radius: Option<f64>,
}

impl Default for CertifySection {
    fn default() -> Self {
        CertifySection {
            pairs: default_pairs(),
            mode: default_pair_mode(),
            beta_policy: default_beta_policy(),
            alphas: Vec::new(),
            ball_radius: None,
        }
    }
}

fn default_pairs() -> u64 {
    100_000
}

fn default_pair_mode() -> PairMode {
    PairMode::Mixed
}

fn default_beta_policy() -> BetaPolicy {
    BetaPolicy::Analytic
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub id: String,
    #[serde(default)]
    pub inputs: BTreeMap<String, f64>,
    /// Tabulate the bound over these horizons (`T` input replaced per row).
    #[serde(rename = "T_grid", default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundSection {
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(default)]
    pub v: f64,
    pub n: usize,
    pub alpha: f64,
    #[serde(rename = "T_grid")]
    pub t_grid: Vec<u64>,
    #[serde(default = "one")]
    pub c_eta: f64,
    #[serde(rename = "c_L", default = "one")]
    pub c_l: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Seeds for the probe (defaults to `M`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn objective(&self) -> Result<Objective> {
        let cfg = self.objective.as_ref().ok_or_else(|| anyhow!("config has no \"objective\" section"))?;
        Ok(Objective::from_config(cfg)?)
    }

    pub fn distribution(&self, obj: &Objective) -> ExampleDistribution {
        self.distribution.clone().unwrap_or_else(|| smoothness::default_distribution(obj))
    }

    pub fn require_replicates(&self) -> Result<usize> {
        let m = self.replicates.ok_or_else(|| anyhow!("config needs \"M\" (number of replicates)"))?;
        if m < 2 {
            bail!("\"M\" must be at least 2, got {m}");
        }
        Ok(m)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let steps = self.steps.ok_or_else(|| anyhow!("config needs \"T\""))?;
        self.experiment_with_steps(steps)
    }

    /// The experiment at horizon `steps` instead of the configured `T`.
    pub fn experiment_with_steps(&self, steps: u64) -> Result<Experiment> {
        let n = self.n.ok_or_else(|| anyhow!("config needs \"n\""))?;
        let schedule = self.schedule.clone().ok_or_else(|| anyhow!("config needs a \"schedule\""))?;
        let mut exp = Experiment::new(n, schedule, self.scheme, steps)
            .with_swa(self.swa)
            .with_index_mode(self.index_mode)
            .with_identical(self.identical);
        exp.n_test = self.n_test;
        exp.validate()?;
        Ok(exp)
    }

    pub fn bound_id(&self) -> Result<Option<BoundId>> {
        self.bounds.as_ref().map(|b| b.id.parse::<BoundId>().map_err(|e| anyhow!("{e}"))).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_json(
            r#"{"seed": 1, "objective": {"family": "quadratic", "dim": 1, "example_radius": 1.0,
                "domain_radius": 2.0, "adversarial": {"epsilon": 0.1, "p": "inf"}},
                "schedule": {"kind": "fixed", "alpha": 0.01}, "n": 10, "T": 100, "M": 4}"#,
        )
        .unwrap();
        assert_eq!(cfg.objective().unwrap().constants().eta, 0.2);
        assert_eq!(cfg.experiment().unwrap().steps, 100);
    }

    #[test]
    fn unknown_keys_and_missing_seed_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"seed": 1, "bogus": 2}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"n": 2}"#).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"seed": 1, "objective": {"family": "quadratic", "dim": 1, "example_radius": 1.0, "extra": 1,
                "domain_radius": 2.0}}"#
        )
        .is_err());
    }

    #[test]
    fn hard_instance_family_parses() {
        let cfg = ExperimentConfig::from_json(
            r#"{"seed": 0, "objective": {"family": "hard_instance", "d": 4, "horizon": 4, "v": 0.0, "K": 1.0, "eta": 1.0}}"#,
        )
        .unwrap();
        assert_eq!(cfg.objective().unwrap().param_dim(), 4);
    }
}
