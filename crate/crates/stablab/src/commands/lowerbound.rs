//! `lowerbound`: run the hard instance at each horizon of a grid and compare
//! the measured δ_T with the closed form and the lower bound.

use anyhow::{anyhow, Result};
use serde::Serialize;
use stablab_core::bounds::{self, LowerBoundConstants};
use stablab_core::engine::{RunConfig, Scheme};
use stablab_core::objective::make_hard_instance;
use stablab_core::stability;
use stablab_core::{HardInstanceParams, ScheduleSpec};

use super::{Invocation, Outcome};
use crate::config::{ExperimentConfig, LowerBoundSection};
use crate::io;

pub const COLUMNS: [&str; 6] = ["T", "delta_T", "closed_form", "rel_err", "witness", "lb"];

/// Relative tolerance between the measured δ_T and the closed form.
pub const MATCH_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundRow {
    #[serde(rename = "T")]
    pub steps: u64,
    pub delta_t: f64,
    /// Only available for `v = 0`.
    pub closed_form: Option<f64>,
    pub rel_err: Option<f64>,
    pub witness: f64,
    pub lb: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    rows: &'a [LowerBoundRow],
    passed: bool,
    timestamp: u64,
}

/// One hard instance per horizon `T`, with `d = T` coordinates.
pub fn compute(section: &LowerBoundSection, seed: u64) -> Result<Vec<LowerBoundRow>> {
    let consts = LowerBoundConstants { c_eta: section.c_eta, c_l: section.c_l };
    section
        .t_grid
        .iter()
        .map(|&t| {
            let params = HardInstanceParams { d: t.max(1) as usize, horizon: t.max(1) as usize, v: section.v, k: section.k, eta: section.eta };
            let (obj, pair) = make_hard_instance(params.clone(), section.n)?;
            let cfg = RunConfig::new(ScheduleSpec::fixed(section.alpha), Scheme::FullBatch, t, seed);
            let run = stability::coupled_run(&obj, &pair, &cfg)?;
            let delta_t = run.delta[t as usize];
            let closed_form = (section.v == 0.0).then(|| stability::hard_instance_delta(&params, section.n, section.alpha, t)).transpose()?;
            let rel_err = closed_form.map(|c| if c == 0.0 { delta_t.abs() } else { (delta_t - c).abs() / c });
            Ok(LowerBoundRow {
                steps: t,
                delta_t,
                closed_form,
                rel_err,
                witness: stability::hard_instance_witness(&params, section.n, section.alpha, t),
                lb: bounds::lb_uas(section.eta, obj.constants().l, section.alpha, t as f64, section.n as f64, consts)?,
            })
        })
        .collect()
}

pub fn run(inv: &Invocation) -> Result<Outcome> {
    let section = inv.config.lowerbound.as_ref().ok_or_else(|| anyhow!("config has no \"lowerbound\" section"))?;
    let rows = compute(section, inv.config.seed)?;
    let mut out = Outcome::default();
    for r in &rows {
        if let Some(err) = r.rel_err {
            out.check(err <= MATCH_TOL, format!("T = {}: delta_T {} differs from the closed form (rel err {err:e})", r.steps, r.delta_t));
        }
        out.check(r.delta_t + 1e-12 >= r.witness, format!("T = {}: delta_T {} below the witness {}", r.steps, r.delta_t, r.witness));
    }
    let csv = rows.iter().map(|r| {
        vec![r.steps.to_string(), io::num(r.delta_t), io::opt_num(r.closed_form), io::opt_num(r.rel_err), io::num(r.witness), io::num(r.lb)]
    });
    let path = io::output_path(&inv.prefix, ".lowerbound.csv");
    io::write_csv(&path, &COLUMNS, csv)?;
    out.files.push(path);
    let path = io::output_path(&inv.prefix, ".lowerbound.json");
    io::write_json(&path, &Summary { command: "lowerbound", config: &inv.config, rows: &rows, passed: out.passed(), timestamp: io::timestamp() })?;
    out.files.push(path);
    Ok(out)
}
