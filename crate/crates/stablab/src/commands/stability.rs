//! `stability`: coupled runs over `M` replicates, the δ_t CSV with bound
//! overlays, and a JSON summary of every check made on them.

use anyhow::{bail, Result};
use serde::Serialize;
use stablab_core::bounds;
use stablab_core::engine::{self, Scheme};
use stablab_core::objective::make_hard_instance;
use stablab_core::rng::{self, streams};
use stablab_core::stability::{
    self, ConvergenceProbe, Experiment, NeighborPair, Overlay, StabilityAccumulator, StabilityReport,
};
use stablab_core::stats::MeanCi;
use stablab_core::{ConstantsRecord, ExampleDistribution, Family, Objective};

use super::{Invocation, Outcome};
use crate::config::ExperimentConfig;
use crate::io;

/// Column order of the stability CSV.
pub const COLUMNS: [&str; 10] = [
    "t",
    "delta_mean",
    "delta_lo",
    "delta_hi",
    "delta_swa_mean",
    "ub_convex",
    "ub_swa",
    "lb",
    "gen_gap",
    "gen_gap_ci",
];

/// Relative tolerance for matching the hard instance's closed-form recursion.
pub const RECURSION_TOL: f64 = 1e-10;

#[derive(Debug, Serialize)]
pub struct FinalValues {
    pub delta: MeanCi,
    pub delta_swa: Option<MeanCi>,
}

/// Bounds at the horizon. `*_delta` values are in parameter-distance units
/// (the loss-unit bound divided by `L`), directly comparable with δ.
#[derive(Debug, Serialize)]
pub struct FinalBounds {
    pub ub_convex: f64,
    pub ub_convex_delta: f64,
    pub ub_swa: f64,
    pub ub_swa_delta: f64,
    pub ub_strongly_delta: Option<f64>,
    pub lb: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct Checks {
    /// Convex families: mean δ_T ≤ (η + 2L/n)Σα + 2·CI.
    pub mean_delta_t_le_ub: Option<bool>,
    /// SWA on a convex family: mean δ̄_T ≤ ub_swa/L + 2·CI.
    pub swa_le_ub: Option<bool>,
    /// Strongly convex families: mean δ_T ≤ η/γ + 2L/(γn) + 2·CI.
    pub strongly_le_ub: Option<bool>,
    /// Convex families with a test set: |gen gap| ≤ ub_convex + 2·CI.
    pub gen_gap_le_ub: Option<bool>,
    /// Hard instance: δ_t equals the closed-form recursion for every t.
    pub recursion_match: Option<bool>,
    pub recursion_max_rel_err: Option<f64>,
    /// Hard instance: δ_T ≥ ηα√(T−1)(n−1)/n.
    pub witness: Option<bool>,
    /// Convergence probe: min mean ‖∇R_S‖² ≤ bound.
    pub probe: Option<bool>,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    constants: &'a ConstantsRecord,
    index_mode: stability::IndexMode,
    replicates: usize,
    #[serde(rename = "final")]
    final_values: FinalValues,
    bounds: FinalBounds,
    // spelled out to keep the documented key
    #[serde(rename = "mean_delta_T_le_ub")]
    mean_delta_t_le_ub: Option<bool>,
    checks: &'a Checks,
    certificate: CertificateSummary,
    gen_gap: Option<MeanCi>,
    probe: Option<ConvergenceProbe>,
    passed: bool,
    timestamp: u64,
}

#[derive(Serialize)]
struct CertificateSummary {
    applicable: bool,
    violations: u64,
    passed: bool,
}

/// Everything `stability` computes, before it is written out.
pub struct StabilityRun {
    pub objective: Objective,
    pub experiment: Experiment,
    pub report: StabilityReport,
    pub overlay: Overlay,
    pub final_values: FinalValues,
    pub bounds: FinalBounds,
    pub checks: Checks,
    pub probe: Option<ConvergenceProbe>,
}

/// The constructed neighbor pair for the hard instance; `None` otherwise.
fn fixed_pair(obj: &Objective, n: usize) -> Result<Option<NeighborPair>> {
    match obj.family() {
        Family::HardInstance(p) => Ok(Some(make_hard_instance(p.clone(), n)?.1)),
        _ => Ok(None),
    }
}

pub fn compute(inv: &Invocation) -> Result<StabilityRun> {
    let cfg = &inv.config;
    let obj = cfg.objective()?;
    let dist = cfg.distribution(&obj);
    let exp = cfg.experiment()?;
    let m = cfg.require_replicates()?;
    let pair = fixed_pair(&obj, exp.n)?;

    let mut acc = StabilityAccumulator::new(&exp);
    inv.pool.ordered_fold(
        m as u64,
        |r| {
            let seed = rng::derive_seed(cfg.seed, r);
            Ok(match &pair {
                Some(p) => stability::replicate_on_pair(&obj, p, &exp, seed)?,
                None => stability::run_replicate(&obj, &dist, &exp, seed)?,
            })
        },
        |_, rep| {
            acc.push(&rep);
            Ok(())
        },
    )?;
    let report = acc.finish()?;

    let alphas = exp.schedule.alphas(exp.steps)?;
    let overlay = stability::bound_overlay(&obj, exp.n, &alphas)?;
    let c = obj.constants();
    let nf = exp.n as f64;
    let sum_alpha: f64 = alphas.iter().sum();
    let last = exp.steps as usize;
    let bounds = FinalBounds {
        ub_convex: bounds::ub_convex_sum(c.l, c.eta, nf, sum_alpha)?,
        ub_convex_delta: overlay.ub_convex[last],
        ub_swa: bounds::ub_swa_sum(c.l, c.eta, nf, sum_alpha)?,
        ub_swa_delta: overlay.ub_swa[last],
        ub_strongly_delta: overlay.ub_strongly,
        lb: overlay.lb[last],
    };
    let final_values = FinalValues { delta: report.final_delta(), delta_swa: report.final_delta_swa() };

    let mut checks = Checks::default();
    let d = final_values.delta;
    if obj.is_convex() && pair.is_none() {
        checks.mean_delta_t_le_ub = Some(d.mean <= bounds.ub_convex_delta + 2.0 * d.ci);
        checks.swa_le_ub = final_values.delta_swa.map(|s| s.mean <= bounds.ub_swa_delta + 2.0 * s.ci);
        checks.strongly_le_ub = bounds.ub_strongly_delta.map(|ub| d.mean <= ub + 2.0 * d.ci);
        checks.gen_gap_le_ub = report.gen_gap.map(|g| g.mean.abs() <= bounds.ub_convex + 2.0 * g.ci);
    }
    if let (Some(_), Family::HardInstance(p)) = (&pair, obj.family()) {
        hard_instance_checks(&mut checks, p, &exp, &report)?;
    }

    let probe = match &cfg.probe {
        Some(section) => {
            let data = replicate_zero_data(cfg, &obj, &dist, &exp, pair.as_ref())?;
            let seeds = section.seeds.unwrap_or(m);
            let p = stability::convergence_probe(&obj, &data, exp.scheme, exp.steps, seeds, section.tau, section.sigma, cfg.seed)?;
            checks.probe = Some(p.passed());
            Some(p)
        }
        None => None,
    };

    Ok(StabilityRun { objective: obj, experiment: exp, report, overlay, final_values, bounds, checks, probe })
}

fn hard_instance_checks(
    checks: &mut Checks,
    p: &stablab_core::HardInstanceParams,
    exp: &Experiment,
    report: &StabilityReport,
) -> Result<()> {
    let Some(alpha) = stability::constant_alpha(&exp.schedule) else {
        return Ok(());
    };
    if exp.scheme != Scheme::FullBatch || p.v != 0.0 || exp.steps > p.horizon as u64 {
        return Ok(());
    }
    let mut worst = 0.0_f64;
    for (t, measured) in report.delta.mean.iter().enumerate() {
        let closed = stability::hard_instance_delta(p, exp.n, alpha, t as u64)?;
        let err = if closed == 0.0 { measured.abs() } else { (measured - closed).abs() / closed };
        worst = worst.max(err);
    }
    checks.recursion_max_rel_err = Some(worst);
    checks.recursion_match = Some(worst <= RECURSION_TOL);
    let witness = stability::hard_instance_witness(p, exp.n, alpha, exp.steps);
    checks.witness = Some(report.delta.mean[exp.steps as usize] >= witness);
    Ok(())
}

/// Training set of replicate 0 (or the fixed pair's `S`).
fn replicate_zero_data(
    cfg: &ExperimentConfig,
    obj: &Objective,
    dist: &ExampleDistribution,
    exp: &Experiment,
    pair: Option<&NeighborPair>,
) -> Result<Vec<Vec<f64>>> {
    Ok(match pair {
        Some(p) => p.s().to_vec(),
        None => {
            let seed = rng::derive_seed(cfg.seed, 0);
            obj.sample_dataset(dist, exp.n, &mut rng::stream(seed, streams::DATA))?
        }
    })
}

pub fn csv_rows(run: &StabilityRun) -> Vec<Vec<String>> {
    let r = &run.report;
    let last = run.experiment.steps as usize;
    (0..=last)
        .map(|t| {
            let gap = (t == last).then_some(r.gen_gap).flatten();
            vec![
                t.to_string(),
                io::num(r.delta.mean[t]),
                io::num(r.delta.lo[t]),
                io::num(r.delta.hi[t]),
                io::opt_num(r.delta_swa.as_ref().map(|s| s.mean[t])),
                io::num(run.overlay.ub_convex[t]),
                io::num(run.overlay.ub_swa[t]),
                io::num(run.overlay.lb[t]),
                io::opt_num(gap.map(|g| g.mean)),
                io::opt_num(gap.map(|g| g.ci)),
            ]
        })
        .collect()
}

pub fn run(inv: &Invocation) -> Result<Outcome> {
    let cfg = &inv.config;
    if cfg.steps == Some(0) {
        bail!("\"T\" must be at least 1");
    }
    let run = compute(inv)?;
    let mut out = Outcome::default();

    let csv_path = io::output_path(&inv.prefix, ".stability.csv");
    io::write_csv(&csv_path, &COLUMNS, csv_rows(&run))?;
    out.files.push(csv_path);

    if cfg.trajectory {
        let seed = rng::derive_seed(cfg.seed, 0);
        let dist = cfg.distribution(&run.objective);
        let data = replicate_zero_data(cfg, &run.objective, &dist, &run.experiment, fixed_pair(&run.objective, run.experiment.n)?.as_ref())?;
        let rec = engine::run(&run.objective, &data, &run.experiment.run_config(seed))?;
        let (a, b) = io::write_trajectory(&inv.prefix, &rec)?;
        out.files.extend([a, b]);
    }

    let cert = run.report.certificate;
    out.check(
        !cert.applicable || cert.passed(),
        format!("path-wise certificate violated on {} steps", cert.violations),
    );
    let c = &run.checks;
    let named = [
        (c.mean_delta_t_le_ub, "mean delta_T exceeds the convex bound"),
        (c.swa_le_ub, "SWA delta exceeds its bound"),
        (c.strongly_le_ub, "mean delta_T exceeds the strongly convex plateau bound"),
        (c.gen_gap_le_ub, "generalization gap exceeds ub_convex"),
        (c.recursion_match, "hard-instance trajectory differs from the closed-form recursion"),
        (c.witness, "hard-instance delta_T is below the sqrt(T) witness"),
        (c.probe, "convergence probe exceeds its bound"),
    ];
    for (flag, what) in named {
        out.check(flag != Some(false), what);
    }

    let json_path = io::output_path(&inv.prefix, ".stability.json");
    io::write_json(
        &json_path,
        &Summary {
            command: "stability",
            config: cfg,
            constants: run.objective.constants(),
            index_mode: run.report.index_mode,
            replicates: run.report.replicates,
            final_values: run.final_values,
            bounds: run.bounds,
            mean_delta_t_le_ub: run.checks.mean_delta_t_le_ub,
            checks: &run.checks,
            certificate: CertificateSummary { applicable: cert.applicable, violations: cert.violations, passed: cert.passed() },
            gen_gap: run.report.gen_gap,
            probe: run.probe,
            passed: out.passed(),
            timestamp: io::timestamp(),
        },
    )?;
    out.files.push(json_path);
    Ok(out)
}
