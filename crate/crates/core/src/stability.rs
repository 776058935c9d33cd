//! Neighboring datasets, coupled SGD runs and the quantities measured on
//! them: the argument-stability series `δ_t = ‖θ_t(S) − θ_t(S')‖`, the
//! generalization gap, the optimization gap and the convergence probe.
//!
//! Coupling: both trajectories consume one shared index stream, so at every
//! step they look at the same position of their datasets. The only inner
//! solvers offered are deterministic (closed form, enumeration, PGD started
//! at `z`), so there is no other randomness to share.
//!
//! Replicate `r` of an experiment with master seed `s` uses the seed
//! `derive_seed(s, r)`, and draws its data, differing index, index stream and
//! test set from separate streams of that seed.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::engine::{IndexStream, RunConfig, Scheme, Sgd};
use crate::error::{ensure, Error, Result};
use crate::math;
use crate::objective::{Example, ExampleDistribution, Family, HardInstanceParams, Objective};
use crate::rng::{self, streams};
use crate::schedule::{ScheduleKind, ScheduleSpec};
use crate::stats::{self, MeanCi, SeriesAccumulator, SeriesStats};

/// Slack allowed on each step of the path-wise certificate.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Smallest test set accepted for population-risk estimates.
pub const MIN_TEST_SIZE: usize = 1000;

/// Largest `n` for which the worst-case differing index is found by enumeration.
pub const MAX_ENUM_N: usize = 8;

/// Datasets `S`, `S'` that agree everywhere except at one (1-based) index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborPair {
    s: Vec<Example>,
    s_prime: Vec<Example>,
    differing_index: usize,
}

impl NeighborPair {
    pub fn new(s: Vec<Example>, s_prime: Vec<Example>, differing_index: usize) -> Result<Self> {
        ensure!(!s.is_empty(), "datasets must be non-empty");
        ensure!(s.len() == s_prime.len(), "S has {} examples but S' has {}", s.len(), s_prime.len());
        ensure!(
            (1..=s.len()).contains(&differing_index),
            "differing index {differing_index} outside [1, {}]",
            s.len()
        );
        for (k, (a, b)) in s.iter().zip(&s_prime).enumerate() {
            ensure!(k + 1 == differing_index || a == b, "S and S' also differ at index {}", k + 1);
        }
        Ok(NeighborPair { s, s_prime, differing_index })
    }

    /// `S = S'`: the coupled runs must coincide.
    pub fn identical(s: Vec<Example>, differing_index: usize) -> Result<Self> {
        let s_prime = s.clone();
        NeighborPair::new(s, s_prime, differing_index)
    }

    pub fn s(&self) -> &[Example] {
        &self.s
    }

    pub fn s_prime(&self) -> &[Example] {
        &self.s_prime
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    /// 1-based position of the replaced example.
    pub fn differing_index(&self) -> usize {
        self.differing_index
    }
}

/// Draws `S` (n i.i.d. examples) and replaces example `i` (1-based) by an
/// independent draw to form `S'`.
pub fn make_neighbors(obj: &Objective, dist: &ExampleDistribution, n: usize, i: usize, seed: u64) -> Result<NeighborPair> {
    ensure!(n >= 1 && (1..=n).contains(&i), "differing index {i} outside [1, {n}]");
    let s = obj.sample_dataset(dist, n, &mut rng::stream(seed, streams::DATA))?;
    let mut s_prime = s.clone();
    s_prime[i - 1] = obj.sample_example(dist, &mut rng::stream(seed, streams::DIFFERING))?;
    NeighborPair::new(s, s_prime, i)
}

/// Result of one pair of coupled trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    /// `δ_0 … δ_T`, with `δ_0 = 0`.
    pub delta: Vec<f64>,
    /// `‖θ̄_t(S) − θ̄_t(S')‖` for the running averages, when SWA is on.
    pub delta_swa: Option<Vec<f64>>,
    /// Shared sampled indices (`None` for full-batch steps), 0-based.
    pub indices: Vec<Option<usize>>,
    pub alphas: Vec<f64>,
    pub theta_s: Vec<f64>,
    pub theta_s_prime: Vec<f64>,
    pub swa_s: Option<Vec<f64>>,
}

/// Runs SGD on `S` and `S'` under the same index stream and schedule.
pub fn coupled_run(obj: &Objective, pair: &NeighborPair, cfg: &RunConfig) -> Result<CoupledRun> {
    cfg.schedule.validate()?;
    let theta0 = cfg.theta0.as_deref();
    let mut a = Sgd::new(obj, pair.s(), theta0, cfg.swa)?;
    let mut b = Sgd::new(obj, pair.s_prime(), theta0, cfg.swa)?;
    let mut stream = IndexStream::new(cfg.scheme, pair.n(), cfg.seed);
    let steps = cfg.steps as usize;
    let mut delta = Vec::with_capacity(steps + 1);
    delta.push(0.0);
    let mut delta_swa = cfg.swa.then(|| {
        let mut v = Vec::with_capacity(steps + 1);
        v.push(0.0);
        v
    });
    let mut indices = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    for t in 1..=cfg.steps {
        let alpha = cfg.schedule.alpha(t)?;
        let index = stream.next_index();
        a.step(alpha, index);
        b.step(alpha, index);
        delta.push(math::dist2(a.theta(), b.theta()));
        if let Some(ds) = delta_swa.as_mut() {
            let (sa, sb) = (a.swa_theta().unwrap_or_default(), b.swa_theta().unwrap_or_default());
            ds.push(math::dist2(&sa, &sb));
        }
        indices.push(index);
        alphas.push(alpha);
    }
    Ok(CoupledRun {
        delta,
        delta_swa,
        indices,
        alphas,
        swa_s: a.swa_theta(),
        theta_s: a.theta().to_vec(),
        theta_s_prime: b.theta().to_vec(),
    })
}

/// Whether the step-level certificate is a theorem for this run: convex loss
/// and every `α_t ≤ 1/β`.
pub fn certificate_applies(obj: &Objective, alphas: &[f64]) -> bool {
    let beta = obj.constants().beta;
    obj.is_convex() && alphas.iter().all(|a| beta == 0.0 || *a <= 1.0 / beta * (1.0 + 1e-12))
}

/// Counts steps with `δ_t > δ_{t−1} + α_t η + 2Lα_t w_t + tol`, where `w_t`
/// is 1 if the differing example was sampled (`1/n` for full-batch steps)
/// and 0 otherwise.
pub fn certificate_violations(obj: &Objective, pair: &NeighborPair, run: &CoupledRun) -> u64 {
    let c = obj.constants();
    let i = pair.differing_index() - 1;
    let n = pair.n() as f64;
    let mut count = 0;
    for (t, (idx, alpha)) in run.indices.iter().zip(&run.alphas).enumerate() {
        let hit = match idx {
            Some(k) => (*k == i) as u8 as f64,
            None => 1.0 / n,
        };
        let allowed = run.delta[t] + alpha * c.eta + 2.0 * c.l * alpha * hit + CERTIFICATE_TOL;
        if run.delta[t + 1] > allowed {
            count += 1;
        }
    }
    count
}

/// How the differing index of each replicate is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// Uniform over `[1, n]`, drawn per replicate.
    Randomized,
    /// Every `i ∈ [1, n]` is tried (n ≤ 8) and the largest `δ_T` is kept.
    WorstCase,
}

/// Settings shared by all replicates of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub n: usize,
    pub schedule: ScheduleSpec,
    pub scheme: Scheme,
    pub steps: u64,
    #[serde(default)]
    pub swa: bool,
    #[serde(default = "default_index_mode")]
    pub index_mode: IndexMode,
    /// Test-set size for the generalization gap; no gap when absent.
    #[serde(default)]
    pub n_test: Option<usize>,
    /// Forces `S' = S` (sanity runs).
    #[serde(default)]
    pub identical: bool,
}

fn default_index_mode() -> IndexMode {
    IndexMode::Randomized
}

impl Experiment {
    pub fn new(n: usize, schedule: ScheduleSpec, scheme: Scheme, steps: u64) -> Self {
        Experiment {
            n,
            schedule,
            scheme,
            steps,
            swa: false,
            index_mode: IndexMode::Randomized,
            n_test: None,
            identical: false,
        }
    }

    pub fn with_swa(mut self, swa: bool) -> Self {
        self.swa = swa;
        self
    }

    pub fn with_index_mode(mut self, mode: IndexMode) -> Self {
        self.index_mode = mode;
        self
    }

    pub fn with_test_size(mut self, n_test: usize) -> Self {
        self.n_test = Some(n_test);
        self
    }

    pub fn with_identical(mut self, identical: bool) -> Self {
        self.identical = identical;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n >= 1, "n must be positive");
        self.schedule.validate()?;
        if self.index_mode == IndexMode::WorstCase {
            ensure!(self.n <= MAX_ENUM_N, "worst-case index enumeration needs n <= {MAX_ENUM_N}");
        }
        if let Some(m) = self.n_test {
            ensure!(m >= MIN_TEST_SIZE, "test-set size must be at least {MIN_TEST_SIZE}, got {m}");
        }
        Ok(())
    }

    /// Engine settings for one trajectory of this experiment.
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig::new(self.schedule.clone(), self.scheme, self.steps, seed).with_swa(self.swa)
    }
}

/// Everything measured on one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub seed: u64,
    pub differing_index: usize,
    pub delta: Vec<f64>,
    pub delta_swa: Option<Vec<f64>>,
    /// `None` when the certificate does not apply to the run.
    pub certificate_violations: Option<u64>,
    /// `R_test(θ_T(S)) − R_S(θ_T(S))`.
    pub gen_gap: Option<f64>,
    pub train_risk: Option<f64>,
}

fn pair_for(obj: &Objective, dist: &ExampleDistribution, exp: &Experiment, seed: u64, i: usize) -> Result<NeighborPair> {
    if exp.identical {
        let s = obj.sample_dataset(dist, exp.n, &mut rng::stream(seed, streams::DATA))?;
        NeighborPair::identical(s, i)
    } else {
        make_neighbors(obj, dist, exp.n, i, seed)
    }
}

/// One replicate: fresh data, differing index and index stream from `seed`.
pub fn run_replicate(obj: &Objective, dist: &ExampleDistribution, exp: &Experiment, seed: u64) -> Result<Replicate> {
    let cfg = exp.run_config(seed);
    let candidates: Vec<usize> = match exp.index_mode {
        IndexMode::Randomized => {
            // a separate stream so the index choice is independent of the redraw
            let mut r = rng::stream(rng::derive_seed(seed, 0), streams::DIFFERING);
            vec![r.gen_range(1..=exp.n)]
        }
        IndexMode::WorstCase => (1..=exp.n).collect(),
    };
    let mut best: Option<(NeighborPair, CoupledRun)> = None;
    for i in candidates {
        let pair = pair_for(obj, dist, exp, seed, i)?;
        let run = coupled_run(obj, &pair, &cfg)?;
        let better = match &best {
            None => true,
            Some((_, b)) => run.delta.last() > b.delta.last(),
        };
        if better {
            best = Some((pair, run));
        }
    }
    let (pair, run) = best.ok_or_else(|| Error::rejected("no differing index to try"))?;
    let test = match exp.n_test {
        Some(m) => Some(obj.sample_dataset(dist, m, &mut rng::stream(seed, streams::TEST))?),
        None => None,
    };
    Ok(finish_replicate(obj, &pair, run, seed, test.as_deref()))
}

/// One replicate on a fixed neighbor pair (e.g. the lower-bound
/// construction); only the index stream depends on `seed`.
pub fn replicate_on_pair(obj: &Objective, pair: &NeighborPair, exp: &Experiment, seed: u64) -> Result<Replicate> {
    let run = coupled_run(obj, pair, &exp.run_config(seed))?;
    Ok(finish_replicate(obj, pair, run, seed, None))
}

fn finish_replicate(obj: &Objective, pair: &NeighborPair, run: CoupledRun, seed: u64, test: Option<&[Example]>) -> Replicate {
    let certificate = certificate_applies(obj, &run.alphas).then(|| certificate_violations(obj, pair, &run));
    let (gen_gap, train_risk) = match test {
        Some(test) => {
            let train = obj.empirical_risk(&run.theta_s, pair.s());
            (Some(obj.empirical_risk(&run.theta_s, test) - train), Some(train))
        }
        None => (None, None),
    };
    Replicate {
        seed,
        differing_index: pair.differing_index(),
        delta: run.delta,
        delta_swa: run.delta_swa,
        certificate_violations: certificate,
        gen_gap,
        train_risk,
    }
}

/// Per-certificate verdict over all replicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateVerdict {
    pub applicable: bool,
    pub violations: u64,
}

impl CertificateVerdict {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub index_mode: IndexMode,
    pub replicates: usize,
    pub delta: SeriesStats,
    pub delta_swa: Option<SeriesStats>,
    pub certificate: CertificateVerdict,
    pub gen_gap: Option<MeanCi>,
    pub train_risk: Option<MeanCi>,
}

impl StabilityReport {
    pub fn final_delta(&self) -> MeanCi {
        let t = self.delta.mean.len() - 1;
        MeanCi { mean: self.delta.mean[t], ci: self.delta.ci(t), count: self.replicates }
    }

    pub fn final_delta_swa(&self) -> Option<MeanCi> {
        let s = self.delta_swa.as_ref()?;
        let t = s.mean.len() - 1;
        Some(MeanCi { mean: s.mean[t], ci: s.ci(t), count: self.replicates })
    }
}

/// Order-sensitive fold of replicates into a [`StabilityReport`]; lets
/// callers stream replicates without keeping every series in memory.
#[derive(Clone, Debug)]
pub struct StabilityAccumulator {
    index_mode: IndexMode,
    delta: SeriesAccumulator,
    swa: Option<SeriesAccumulator>,
    applicable: bool,
    violations: u64,
    gaps: Vec<f64>,
    train: Vec<f64>,
    count: usize,
}

impl StabilityAccumulator {
    pub fn new(exp: &Experiment) -> Self {
        let len = exp.steps as usize + 1;
        StabilityAccumulator {
            index_mode: exp.index_mode,
            delta: SeriesAccumulator::new(len),
            swa: exp.swa.then(|| SeriesAccumulator::new(len)),
            applicable: true,
            violations: 0,
            gaps: Vec::new(),
            train: Vec::new(),
            count: 0,
        }
    }

    pub fn push(&mut self, r: &Replicate) {
        self.delta.push(&r.delta);
        if let (Some(acc), Some(s)) = (self.swa.as_mut(), r.delta_swa.as_ref()) {
            acc.push(s);
        }
        match r.certificate_violations {
            Some(v) => self.violations += v,
            None => self.applicable = false,
        }
        self.gaps.extend(r.gen_gap);
        self.train.extend(r.train_risk);
        self.count += 1;
    }

    pub fn finish(&self) -> Result<StabilityReport> {
        ensure!(self.count >= 2, "need at least 2 replicates for an interval, got {}", self.count);
        Ok(StabilityReport {
            index_mode: self.index_mode,
            replicates: self.count,
            delta: self.delta.finish(),
            delta_swa: self.swa.as_ref().map(|a| a.finish()),
            certificate: CertificateVerdict {
                applicable: self.applicable,
                violations: if self.applicable { self.violations } else { 0 },
            },
            gen_gap: (!self.gaps.is_empty()).then(|| stats::mean_ci(&self.gaps)),
            train_risk: (!self.train.is_empty()).then(|| stats::mean_ci(&self.train)),
        })
    }
}

/// Folds replicates, in the order given, into a report.
pub fn aggregate(exp: &Experiment, reps: &[Replicate]) -> Result<StabilityReport> {
    let mut acc = StabilityAccumulator::new(exp);
    for r in reps {
        acc.push(r);
    }
    acc.finish()
}

/// Sequential `measure_uas`: `m` replicates with seeds `derive_seed(seed, r)`.
pub fn measure_uas(
    obj: &Objective,
    dist: &ExampleDistribution,
    exp: &Experiment,
    m: usize,
    seed: u64,
) -> Result<StabilityReport> {
    exp.validate()?;
    ensure!(m >= 2, "need at least 2 replicates, got {m}");
    let mut acc = StabilityAccumulator::new(exp);
    for r in 0..m as u64 {
        acc.push(&run_replicate(obj, dist, exp, rng::derive_seed(seed, r))?);
    }
    acc.finish()
}

/// Bound curves in parameter-distance units, one value per `t = 0..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    /// `(η + 2L/n) Σ_{s≤t} α_s`
    pub ub_convex: Vec<f64>,
    /// `(η/2 + L/n) Σ_{s≤t} α_s`
    pub ub_swa: Vec<f64>,
    /// `ηᾱ√t + Lᾱt/n` with `ᾱ` the mean step so far.
    pub lb: Vec<f64>,
    /// `η/γ + 2L/(γn)` for strongly convex families.
    pub ub_strongly: Option<f64>,
}

pub fn bound_overlay(obj: &Objective, n: usize, alphas: &[f64]) -> Result<Overlay> {
    let c = obj.constants();
    let l = c.l;
    let nf = n as f64;
    let mut ub_convex = vec![0.0];
    let mut ub_swa = vec![0.0];
    let mut lb = vec![0.0];
    let mut sum = 0.0;
    for (k, a) in alphas.iter().enumerate() {
        sum += a;
        let t = (k + 1) as f64;
        // the bound calculator works in loss units; divide the Lipschitz factor back out
        let scale = if l > 0.0 { l } else { 1.0 };
        ub_convex.push(bounds::ub_convex_sum(l, c.eta, nf, sum)? / scale);
        ub_swa.push(bounds::ub_swa_sum(l, c.eta, nf, sum)? / scale);
        lb.push(bounds::lb_uas(c.eta, l, sum / t, t, nf, bounds::LowerBoundConstants::default())?);
    }
    let ub_strongly = match (obj.strong_convexity(), l > 0.0) {
        (Some(g), true) => Some(bounds::ub_strongly_convex(l, c.eta, g, nf)? / l),
        _ => None,
    };
    Ok(Overlay { ub_convex, ub_swa, lb, ub_strongly })
}

/// `θ^t` of full-batch descent from 0 on the hard instance's `S` with fixed
/// step `α`: `tα/(nK)` on the first `T` coordinates, minus `αη(n−1)/n` on
/// coordinates `1 … t−1` (each piece `e_s` becomes active at step `s + 1`).
pub fn hard_instance_theta(p: &HardInstanceParams, n: usize, alpha: f64, t: u64) -> Result<Vec<f64>> {
    p.validate()?;
    ensure!(t <= p.horizon as u64, "t = {t} exceeds the horizon {}", p.horizon);
    ensure!(p.v == 0.0, "the closed form assumes v = 0");
    let nf = n as f64;
    let mut theta = vec![0.0; p.d];
    let drift = t as f64 * alpha / (nf * p.k);
    let push = alpha * p.eta * (nf - 1.0) / nf;
    for (s, x) in theta.iter_mut().enumerate().take(p.horizon) {
        *x = drift;
        if t >= 1 && (s as u64) < t - 1 {
            *x -= push;
        }
    }
    Ok(theta)
}

/// `δ_t` on the hard instance, from the closed form (the run on `S'` stays at 0).
pub fn hard_instance_delta(p: &HardInstanceParams, n: usize, alpha: f64, t: u64) -> Result<f64> {
    Ok(math::norm2(&hard_instance_theta(p, n, alpha, t)?))
}

/// `ηα√(T−1)(n−1)/n`, the part of `δ_T` the η-pieces alone force.
pub fn hard_instance_witness(p: &HardInstanceParams, n: usize, alpha: f64, t: u64) -> f64 {
    let nf = n as f64;
    p.eta * alpha * math::sqrt(t.saturating_sub(1) as f64) * (nf - 1.0) / nf
}

/// Approximate minimizer of the empirical risk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMinimizer {
    pub theta: Vec<f64>,
    pub risk: f64,
    /// Norm of the projected-gradient mapping at `theta`.
    pub grad_mapping_norm: f64,
    /// Whether the gradient-mapping tolerance was reached.
    pub converged: bool,
}

/// Projected full-batch descent with step `1/β` until the gradient mapping
/// is below `tol`, then (for nonsmooth risks that stall) a projected
/// subgradient polish with steps `c/√k`; the lowest-risk point seen wins.
pub fn reference_minimizer(obj: &Objective, data: &[Example], tol: f64, max_iter: u64) -> Result<ReferenceMinimizer> {
    ensure!(!data.is_empty(), "dataset is empty");
    let c = obj.constants();
    let smooth_beta = if c.l_theta > 0.0 { c.l_theta } else { c.beta.max(1.0) };
    let step = 1.0 / smooth_beta;
    let r = obj.domain_radius();
    let project = |th: &mut Vec<f64>| {
        if r.is_finite() {
            math::project_l2_ball(th, r);
        }
    };
    let mut theta = vec![0.0; obj.param_dim()];
    let mut best = (obj.empirical_risk(&theta, data), theta.clone());
    let mut mapping = f64::INFINITY;
    for _ in 0..max_iter {
        let (risk, g) = obj.empirical_risk_and_gradient(&theta, data);
        if risk < best.0 {
            best = (risk, theta.clone());
        }
        let mut next = theta.clone();
        math::axpy(-step, &g, &mut next);
        project(&mut next);
        mapping = math::dist2(&next, &theta) / step;
        theta = next;
        if mapping <= tol {
            break;
        }
    }
    let converged = mapping <= tol;
    if !converged {
        // nonsmooth risk: polish with diminishing steps from the best point
        theta = best.1.clone();
        let polish = max_iter.max(1);
        for k in 1..=polish {
            let (risk, g) = obj.empirical_risk_and_gradient(&theta, data);
            if risk < best.0 {
                best = (risk, theta.clone());
            }
            math::axpy(-step / math::sqrt(k as f64), &g, &mut theta);
            project(&mut theta);
        }
        let risk = obj.empirical_risk(&theta, data);
        if risk < best.0 {
            best = (risk, theta.clone());
        }
    }
    let (_, g) = obj.empirical_risk_and_gradient(&best.1, data);
    let mut next = best.1.clone();
    math::axpy(-step, &g, &mut next);
    project(&mut next);
    Ok(ReferenceMinimizer {
        grad_mapping_norm: math::dist2(&next, &best.1) / step,
        risk: best.0,
        theta: best.1,
        converged,
    })
}

/// Mean generalization and optimization gaps at `θ_T(S)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub gen_gap: MeanCi,
    /// `R_S(θ_T) − R_S(θ_ref)` at the last iterate; `None` for non-convex families.
    pub opt_gap: Option<MeanCi>,
    /// The same gap at the lowest-risk iterate `θ_k`, `k ≤ T`.
    pub opt_gap_best: Option<MeanCi>,
    pub test_sample_size: usize,
    pub replicates: usize,
    /// Explains a missing optimization gap.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Generalization gap over `m` replicates (fresh data, index stream and test
/// set each) and, for convex families, the optimization gap against a
/// reference minimizer of each replicate's `R_S`.
pub fn estimate_gaps(
    obj: &Objective,
    dist: &ExampleDistribution,
    exp: &Experiment,
    m: usize,
    n_test: usize,
    seed: u64,
) -> Result<GapEstimate> {
    ensure!(n_test >= MIN_TEST_SIZE, "test-set size must be at least {MIN_TEST_SIZE}, got {n_test}");
    ensure!(m >= 2, "need at least 2 replicates, got {m}");
    exp.schedule.validate()?;
    let mut gaps = Vec::with_capacity(m);
    let mut opt = Vec::new();
    let mut opt_best = Vec::new();
    for r in 0..m as u64 {
        let s = rng::derive_seed(seed, r);
        let data = obj.sample_dataset(dist, exp.n, &mut rng::stream(s, streams::DATA))?;
        let mut cfg = exp.run_config(s);
        if obj.is_convex() {
            cfg = cfg.with_best_tracking();
        }
        let rec = crate::engine::run(obj, &data, &cfg)?;
        let test = obj.sample_dataset(dist, n_test, &mut rng::stream(s, streams::TEST))?;
        let train = obj.empirical_risk(&rec.final_theta, &data);
        gaps.push(obj.empirical_risk(&rec.final_theta, &test) - train);
        if obj.is_convex() {
            let reference = reference_minimizer(obj, &data, 1e-8, 20_000)?;
            opt.push(train - reference.risk);
            let best = rec.best.as_ref().map_or(train, |b| b.risk.min(train));
            opt_best.push(best - reference.risk);
        }
    }
    let convex = obj.is_convex();
    Ok(GapEstimate {
        gen_gap: stats::mean_ci(&gaps),
        opt_gap: convex.then(|| stats::mean_ci(&opt)),
        opt_gap_best: convex.then(|| stats::mean_ci(&opt_best)),
        test_sample_size: n_test,
        replicates: m,
        note: (!convex).then(|| String::from("optimization gap unavailable for a non-convex family; see the convergence probe")),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceProbe {
    #[serde(rename = "T")]
    pub steps: u64,
    pub alpha: f64,
    pub tau: f64,
    pub seeds: usize,
    /// `min_t` of the across-seed mean of `‖∇R_S(θ_t)‖²`.
    pub min_mean_sq_grad: f64,
    pub argmin_t: u64,
    /// `R_S(θ_0) − min R_S` with the smallest risk found by any run or by the reference minimizer.
    pub d_hat: f64,
    /// Largest `‖d(θ_t, z_i) − ∇R_S(θ_t)‖` over all visited iterates and examples.
    pub sigma_hat: f64,
    /// `σ` used in the bound: the supplied value, or `sigma_hat`.
    pub sigma: f64,
    pub beta: f64,
    pub eta: f64,
    pub bound: f64,
    /// `(β/(2(1−τ)))²`
    pub min_steps: f64,
}

impl ConvergenceProbe {
    pub fn passed(&self) -> bool {
        self.min_mean_sq_grad <= self.bound
    }
}

/// Runs `m` seeds of SGD with `α = 1/√T` on the fixed dataset `data` and
/// compares the smallest mean squared full-gradient norm with the
/// convergence bound evaluated at estimated `D` and `σ`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_probe(
    obj: &Objective,
    data: &[Example],
    scheme: Scheme,
    steps: u64,
    m: usize,
    tau: f64,
    sigma: Option<f64>,
    seed: u64,
) -> Result<ConvergenceProbe> {
    ensure!(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
    ensure!(m >= 1, "need at least one seed");
    ensure!(steps >= 1, "need at least one step");
    let c = obj.constants();
    let min_steps = bounds::convergence_min_steps(c.beta, tau);
    ensure!(
        steps as f64 >= min_steps,
        "T = {steps} is below the horizon floor (beta/(2(1-tau)))^2 = {min_steps}"
    );
    let alpha = 1.0 / math::sqrt(steps as f64);
    let len = steps as usize + 1;
    let mut sq = vec![0.0; len];
    let mut best_risk = f64::INFINITY;
    let mut sigma_hat = 0.0_f64;
    let theta0 = vec![0.0; obj.param_dim()];
    let r0 = obj.empirical_risk(&theta0, data);
    for r in 0..m as u64 {
        let cfg = RunConfig::new(ScheduleSpec::fixed(alpha), scheme, steps, rng::derive_seed(seed, r));
        let mut sgd = Sgd::new(obj, data, None, false)?;
        let mut stream = IndexStream::new(cfg.scheme, data.len(), cfg.seed);
        for t in 0..=steps {
            // full gradient and per-example deviations at θ_t
            let th = sgd.theta().to_vec();
            let per: Vec<(f64, Vec<f64>)> = data.iter().map(|z| obj.eval(&th, z)).collect();
            let mut g = vec![0.0; th.len()];
            let mut risk = 0.0;
            for (v, d) in &per {
                risk += v;
                math::axpy(1.0, d, &mut g);
            }
            let inv = 1.0 / data.len() as f64;
            math::scale(inv, &mut g);
            risk *= inv;
            best_risk = best_risk.min(risk);
            for (_, d) in &per {
                sigma_hat = sigma_hat.max(math::dist2(d, &g));
            }
            let gn = math::norm2(&g);
            sq[t as usize] += gn * gn / m as f64;
            if t < steps {
                sgd.step(alpha, stream.next_index());
            }
        }
    }
    if obj.is_convex() || matches!(obj.family(), Family::TanhSquare { .. }) {
        let reference = reference_minimizer(obj, data, 1e-8, 5_000)?;
        best_risk = best_risk.min(reference.risk);
    }
    let (argmin, min_sq) = sq
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (t, v)| if *v < acc.1 { (t, *v) } else { acc });
    let d_hat = (r0 - best_risk).max(0.0);
    let sigma_used = sigma.unwrap_or(sigma_hat);
    let bound = bounds::convergence_bound(c.eta, tau, sigma_used, d_hat, c.beta, steps as f64)?;
    Ok(ConvergenceProbe {
        steps,
        alpha,
        tau,
        seeds: m,
        min_mean_sq_grad: min_sq,
        argmin_t: argmin as u64,
        d_hat,
        sigma_hat,
        sigma: sigma_used,
        beta: c.beta,
        eta: c.eta,
        bound,
        min_steps,
    })
}

/// Constant step of a schedule, if it has one.
pub fn constant_alpha(s: &ScheduleSpec) -> Option<f64> {
    match s.kind {
        ScheduleKind::Fixed { alpha } => Some(s.cap.map_or(alpha, |c| alpha.min(c))),
        _ => None,
    }
}
