//! `sweep`: the stability experiment over a grid of ε and/or T values.
//!
//! Every grid point reuses the same replicate seeds (common random numbers):
//! the data, differing index, index stream and test set of replicate `r` are
//! identical across the grid, so trends in ε are not drowned by resampling.

use anyhow::{bail, Result};
use serde::Serialize;
use stablab_core::bounds;
use stablab_core::rng;
use stablab_core::stability::{self, Replicate, MIN_TEST_SIZE};
use stablab_core::stats::{self, MeanCi};
use stablab_core::Objective;

use super::{Invocation, Outcome};
use crate::config::ExperimentConfig;
use crate::io;

pub const COLUMNS: [&str; 8] = ["point", "epsilon", "T", "replicate", "seed", "differing_index", "delta_T", "gen_gap"];

/// Test-set size when the config does not set one.
pub const DEFAULT_TEST_SIZE: usize = 10_000;

#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub point: usize,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub steps: u64,
    pub delta_t: MeanCi,
    pub gen_gap: MeanCi,
    /// `L(η + 2L/n)Σα` at this point, in loss units.
    pub ub_convex: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendSummary {
    #[serde(rename = "T")]
    pub steps: u64,
    /// Spearman ρ between ε and the mean generalization gap.
    pub spearman_gap_vs_epsilon: f64,
    pub gap_non_decreasing: bool,
}

pub struct SweepResult {
    pub points: Vec<PointSummary>,
    pub trends: Vec<TrendSummary>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    points: &'a [PointSummary],
    trends: &'a [TrendSummary],
    timestamp: u64,
}

fn grid(cfg: &ExperimentConfig, base: &Objective) -> Result<Vec<(f64, u64)>> {
    let eps: Vec<f64> = match &cfg.epsilon_grid {
        Some(g) => g.clone(),
        None => vec![base.epsilon()],
    };
    let ts: Vec<u64> = match (&cfg.t_grid, cfg.steps) {
        (Some(g), _) => g.clone(),
        (None, Some(t)) => vec![t],
        (None, None) => bail!("config needs \"T\" or \"T_grid\""),
    };
    if cfg.epsilon_grid.is_none() && cfg.t_grid.is_none() {
        bail!("sweep needs a non-empty \"epsilon_grid\" or \"T_grid\"");
    }
    if eps.is_empty() || ts.is_empty() {
        bail!("sweep grids must be non-empty");
    }
    Ok(ts.iter().flat_map(|t| eps.iter().map(move |e| (*e, *t))).collect())
}

fn objective_at(cfg: &ExperimentConfig, eps: f64) -> Result<Objective> {
    let mut oc = cfg.objective.clone().ok_or_else(|| anyhow::anyhow!("config has no \"objective\" section"))?;
    if cfg.epsilon_grid.is_some() {
        match oc.adversarial.as_mut() {
            Some(a) => {
                a.epsilon = eps;
                a.delta_epsilon = a.delta_epsilon.min(2.0 * eps);
            }
            None => bail!("an epsilon grid needs an \"adversarial\" section in the objective"),
        }
    }
    Ok(Objective::from_config(&oc)?)
}

pub fn compute(inv: &Invocation) -> Result<SweepResult> {
    let cfg = &inv.config;
    let base = cfg.objective()?;
    let points = grid(cfg, &base)?;
    let m = cfg.require_replicates()?;
    let n_test = cfg.n_test.unwrap_or(DEFAULT_TEST_SIZE);
    if n_test < MIN_TEST_SIZE {
        bail!("\"n_test\" must be at least {MIN_TEST_SIZE}");
    }
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for (k, (eps, steps)) in points.iter().enumerate() {
        let obj = objective_at(cfg, *eps)?;
        let dist = cfg.distribution(&obj);
        let mut exp = cfg.experiment_with_steps(*steps)?;
        exp.n_test = Some(n_test);
        let reps: Vec<Replicate> = inv
            .pool
            .map(m as u64, |r| Ok(stability::run_replicate(&obj, &dist, &exp, rng::derive_seed(cfg.seed, r))?))?;
        let mut deltas = Vec::with_capacity(m);
        let mut gaps = Vec::with_capacity(m);
        for (r, rep) in reps.iter().enumerate() {
            let d = rep.delta[*steps as usize];
            let g = rep.gen_gap.unwrap_or(f64::NAN);
            deltas.push(d);
            gaps.push(g);
            rows.push(vec![
                k.to_string(),
                io::num(*eps),
                steps.to_string(),
                r.to_string(),
                rep.seed.to_string(),
                rep.differing_index.to_string(),
                io::num(d),
                io::num(g),
            ]);
        }
        let c = obj.constants();
        let sum_alpha: f64 = exp.schedule.alphas(*steps)?.iter().sum();
        summaries.push(PointSummary {
            point: k,
            epsilon: *eps,
            steps: *steps,
            delta_t: stats::mean_ci(&deltas),
            gen_gap: stats::mean_ci(&gaps),
            ub_convex: bounds::ub_convex_sum(c.l, c.eta, exp.n as f64, sum_alpha)?,
        });
    }
    let mut horizons: Vec<u64> = summaries.iter().map(|p| p.steps).collect();
    horizons.dedup();
    let trends = horizons
        .into_iter()
        .filter_map(|t| {
            let mut at: Vec<&PointSummary> = summaries.iter().filter(|p| p.steps == t).collect();
            if at.len() < 2 {
                return None;
            }
            at.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
            let e: Vec<f64> = at.iter().map(|p| p.epsilon).collect();
            let g: Vec<f64> = at.iter().map(|p| p.gen_gap.mean).collect();
            Some(TrendSummary {
                steps: t,
                spearman_gap_vs_epsilon: stats::spearman(&e, &g),
                gap_non_decreasing: g.windows(2).all(|w| w[1] >= w[0]),
            })
        })
        .collect();
    Ok(SweepResult { points: summaries, trends, rows })
}

pub fn run(inv: &Invocation) -> Result<Outcome> {
    let res = compute(inv)?;
    let mut out = Outcome::default();
    let csv_path = io::output_path(&inv.prefix, ".sweep.csv");
    io::write_csv(&csv_path, &COLUMNS, res.rows.iter().cloned())?;
    out.files.push(csv_path);
    let json_path = io::output_path(&inv.prefix, ".sweep.json");
    io::write_json(
        &json_path,
        &Summary {
            command: "sweep",
            config: &inv.config,
            points: &res.points,
            trends: &res.trends,
            timestamp: io::timestamp(),
        },
    )?;
    out.files.push(json_path);
    Ok(out)
}
