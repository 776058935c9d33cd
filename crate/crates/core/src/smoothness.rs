//! Empirical smoothness constants and randomized checks of the
//! approximate-smoothness inequalities.
//!
//! Uniformly sampled pairs almost never land on opposite sides of a kink, and
//! the `η` slack only shows up across kinks, so the sampler mixes uniform
//! pairs with kink-straddling ones: a segment whose endpoints have different
//! active pieces is bisected down to the nonsmooth locus, and a short pair of
//! length `δ ∈ {10⁻³, 10⁻², 10⁻¹}` is centered there. Pair `j` is drawn from
//! its own stream, so the first `N` pairs are the same for every budget `≥ N`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::math;
use crate::objective::{Example, ExampleDistribution, Family, Objective, Provenance};
use crate::rng::{self, streams, Rng};

/// Absolute tolerance on every checked inequality.
pub const TOLERANCE: f64 = 1e-9;

/// Pair lengths used by the kink-straddling sampler.
pub const STRADDLE_LENGTHS: [f64; 3] = [1e-3, 1e-2, 1e-1];

/// Violations kept verbatim in a report; the count is always exact.
pub const MAX_STORED_VIOLATIONS: usize = 64;

const BISECTION_STEPS: usize = 60;
const STRADDLE_ATTEMPTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    Uniform,
    KinkStraddling,
    /// Even pair indices uniform, odd ones kink-straddling.
    Mixed,
}

/// Everything needed to regenerate the sampled pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    /// Radius of the ball the points are drawn from (the domain radius, or 1
    /// for unbounded domains).
    pub ball_radius: f64,
    pub mode: PairMode,
    pub distribution: ExampleDistribution,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledPair {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub z: Example,
    /// Whether the pair was centered on a detected nonsmooth locus.
    pub straddles: bool,
}

/// Example distribution used when none is configured.
pub fn default_distribution(obj: &Objective) -> ExampleDistribution {
    match obj.family() {
        Family::Quadratic { example_radius, .. } => ExampleDistribution::UniformBall { radius: *example_radius },
        Family::Logistic { dim, .. } | Family::TanhSquare { dim, .. } => {
            let mut teacher = vec![0.0; *dim];
            teacher[0] = 1.0;
            ExampleDistribution::Teacher { teacher, label_noise: 0.5 }
        }
        Family::HardInstance(_) => ExampleDistribution::Bernoulli { p_one: 0.5 },
    }
}

pub struct PairSampler<'a> {
    obj: &'a Objective,
    spec: SamplerSpec,
}

impl<'a> PairSampler<'a> {
    /// Mixed-mode sampler over the domain ball with the default example distribution.
    pub fn new(obj: &'a Objective, seed: u64) -> Self {
        let r = obj.domain_radius();
        let spec = SamplerSpec {
            ball_radius: if r.is_finite() { r } else { 1.0 },
            mode: PairMode::Mixed,
            distribution: default_distribution(obj),
            seed,
        };
        PairSampler { obj, spec }
    }

    pub fn with_mode(mut self, mode: PairMode) -> Self {
        self.spec.mode = mode;
        self
    }

    pub fn with_distribution(mut self, dist: ExampleDistribution) -> Self {
        self.spec.distribution = dist;
        self
    }

    pub fn with_ball_radius(mut self, radius: f64) -> Self {
        self.spec.ball_radius = radius;
        self
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    pub fn objective(&self) -> &Objective {
        self.obj
    }

    /// The `j`-th pair; a pure function of `(spec, j)`.
    pub fn pair(&self, j: u64) -> Result<SampledPair> {
        ensure!(self.spec.ball_radius > 0.0, "sampling radius must be positive");
        let mut rng = rng::stream(rng::derive_seed(self.spec.seed, j), streams::PAIRS);
        let z = self.obj.sample_example(&self.spec.distribution, &mut rng)?;
        let straddle = match self.spec.mode {
            PairMode::Uniform => false,
            PairMode::KinkStraddling => true,
            PairMode::Mixed => j % 2 == 1,
        };
        if straddle {
            let len = STRADDLE_LENGTHS[(j as usize / 2) % STRADDLE_LENGTHS.len()];
            if let Some((theta1, theta2)) = self.straddling(&z, len, &mut rng) {
                return Ok(SampledPair { theta1, theta2, z, straddles: true });
            }
        }
        let theta1 = self.point(&mut rng);
        let theta2 = self.point(&mut rng);
        Ok(SampledPair { theta1, theta2, z, straddles: false })
    }

    fn point(&self, rng: &mut Rng) -> Vec<f64> {
        rng::uniform_ball(rng, self.obj.param_dim(), self.spec.ball_radius)
    }

    fn clip(&self, mut theta: Vec<f64>) -> Vec<f64> {
        math::project_l2_ball(&mut theta, self.spec.ball_radius);
        theta
    }

    fn straddling(&self, z: &[f64], len: f64, rng: &mut Rng) -> Option<(Vec<f64>, Vec<f64>)> {
        let dim = self.obj.param_dim();
        let kinks = self.obj.kink_points(z);
        if !kinks.is_empty() {
            let center = &kinks[rng.gen_range(0..kinks.len())];
            let u = rng::unit_vector(rng, dim);
            return Some(self.around(center, &u, len));
        }
        for _ in 0..STRADDLE_ATTEMPTS {
            let a = self.point(rng);
            let b = self.point(rng);
            let (la, lb) = (self.obj.active_piece(&a, z), self.obj.active_piece(&b, z));
            if la == lb {
                continue;
            }
            // keep `lo` on a's piece and `hi` off it
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            let at = |s: f64| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect() };
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if self.obj.active_piece(&at(mid), z) == la {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let center = at(0.5 * (lo + hi));
            let mut u = math::sub(&b, &a);
            let n = math::norm2(&u);
            if n == 0.0 {
                continue;
            }
            math::scale(1.0 / n, &mut u);
            return Some(self.around(&center, &u, len));
        }
        None
    }

    fn around(&self, center: &[f64], u: &[f64], len: f64) -> (Vec<f64>, Vec<f64>) {
        let mut t1 = center.to_vec();
        let mut t2 = center.to_vec();
        math::axpy(-0.5 * len, u, &mut t1);
        math::axpy(0.5 * len, u, &mut t2);
        (self.clip(t1), self.clip(t2))
    }
}

/// How `β̂` is chosen before `η̂` is fitted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaPolicy {
    /// Use the objective's analytic (or declared) `β`.
    Analytic,
    /// `β̂ = max ‖Δ∇h‖/‖Δθ‖` over pairs whose endpoints share an active piece.
    SameLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCertificate {
    pub l_hat: f64,
    pub beta_hat: f64,
    pub eta_hat: f64,
    pub sample_count: u64,
    pub sampler: SamplerSpec,
    pub beta_policy: BetaPolicy,
    /// Largest amount by which a sampled pair exceeds the objective's own
    /// constants (`|Δh| ≤ L‖Δθ‖` or `‖Δ∇h‖ ≤ β‖Δθ‖ + η`); 0 when consistent.
    pub max_violation: f64,
}

impl SmoothnessCertificate {
    pub fn consistent(&self) -> bool {
        self.max_violation <= TOLERANCE
    }
}

struct PairEval {
    dh: f64,
    dtheta: f64,
    dgrad: f64,
}

fn eval_pair(obj: &Objective, p: &SampledPair) -> PairEval {
    let (h1, g1) = obj.eval(&p.theta1, &p.z);
    let (h2, g2) = obj.eval(&p.theta2, &p.z);
    PairEval { dh: (h1 - h2).abs(), dtheta: math::dist2(&p.theta1, &p.theta2), dgrad: math::dist2(&g1, &g2) }
}

/// Estimates `(L̂, β̂, η̂)` from `n` sampled pairs (mixed uniform and
/// kink-straddling). With `β` fixed, `η̂ = max(‖Δ∇h‖ − β‖Δθ‖)₊`, which is
/// non-decreasing in `n`.
pub fn estimate_constants(obj: &Objective, n: u64, seed: u64) -> Result<SmoothnessCertificate> {
    estimate_constants_with(&PairSampler::new(obj, seed), n, BetaPolicy::Analytic)
}

pub fn estimate_constants_with(sampler: &PairSampler<'_>, n: u64, policy: BetaPolicy) -> Result<SmoothnessCertificate> {
    ensure!(n >= 2, "need at least 2 sampled pairs, got {n}");
    let obj = sampler.objective();
    let pairs: Vec<(PairEval, bool)> = (0..n)
        .map(|j| {
            let p = sampler.pair(j)?;
            let same = obj.active_piece(&p.theta1, &p.z) == obj.active_piece(&p.theta2, &p.z);
            Ok((eval_pair(obj, &p), same))
        })
        .collect::<Result<_>>()?;

    let beta_hat = match policy {
        BetaPolicy::Analytic => {
            ensure!(
                obj.constants().provenance != Provenance::Estimated,
                "no analytic beta available; use the same-label policy"
            );
            obj.constants().beta
        }
        BetaPolicy::SameLabel => pairs
            .iter()
            .filter(|(e, same)| *same && e.dtheta > 0.0)
            .map(|(e, _)| e.dgrad / e.dtheta)
            .fold(0.0, f64::max),
    };

    let c = obj.constants();
    let mut l_hat = 0.0_f64;
    let mut eta_hat = 0.0_f64;
    let mut max_violation = 0.0_f64;
    for (e, _) in &pairs {
        if e.dtheta > 0.0 {
            l_hat = l_hat.max(e.dh / e.dtheta);
        }
        eta_hat = eta_hat.max(e.dgrad - beta_hat * e.dtheta);
        max_violation = max_violation.max(e.dh - c.l * e.dtheta).max(e.dgrad - c.beta * e.dtheta - c.eta);
    }
    Ok(SmoothnessCertificate {
        l_hat,
        beta_hat,
        eta_hat,
        sample_count: n,
        sampler: sampler.spec().clone(),
        beta_policy: policy,
        max_violation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyId {
    Descent,
    Cocoercive,
    ExpansiveGeneral,
    ExpansiveConvex,
    ContractiveStrongly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// `‖G(θ₁) − G(θ₂)‖ ≤ (1 + αβ)‖Δθ‖ + αη`
    General,
    /// `‖G(θ₁) − G(θ₂)‖ ≤ ‖Δθ‖ + αη` for convex `h`, `α ≤ 1/β`
    Convex,
    /// `‖G(θ₁) − G(θ₂)‖ ≤ (1 − αγ)‖Δθ‖ + αη` for γ-strongly convex `h`, `α ≤ 1/β`
    Strongly,
}

/// Constants an inequality is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckParams {
    pub beta: f64,
    pub eta: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub z: Example,
    /// `lhs − rhs`; positive means the inequality failed.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: PropertyId,
    pub params: CheckParams,
    pub pairs_tested: u64,
    /// Pairs among those tested that straddled a detected kink.
    pub straddling_pairs: u64,
    pub violation_count: u64,
    /// The first [`MAX_STORED_VIOLATIONS`] violations.
    pub violations: Vec<Violation>,
    /// Largest `lhs − rhs` seen (negative when every pair held with room).
    pub worst_slack: f64,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    /// Recomputes the slack of a stored violation.
    pub fn replay(&self, obj: &Objective, v: &Violation) -> f64 {
        slack(obj, self.property, &self.params, &v.theta1, &v.theta2, &v.z)
    }
}

/// `lhs − rhs` of a property on the ordered pair `(θ₁, θ₂)` at example `z`.
pub fn slack(obj: &Objective, property: PropertyId, p: &CheckParams, theta1: &[f64], theta2: &[f64], z: &[f64]) -> f64 {
    let (h1, g1) = obj.eval(theta1, z);
    let (h2, g2) = obj.eval(theta2, z);
    let dtheta = math::sub(theta1, theta2);
    let r = math::norm2(&dtheta);
    match property {
        PropertyId::Descent => h1 - h2 - (math::dot(&g2, &dtheta) + 0.5 * p.beta * r * r + p.eta * r),
        PropertyId::Cocoercive => {
            let dg = math::sub(&g1, &g2);
            let excess = (math::norm2(&dg) - p.eta).max(0.0);
            // ⟨Δ∇, Δθ⟩ ≥ (1/β)·excess², written as a "≤ 0" slack
            let rhs = if p.beta > 0.0 {
                excess * excess / p.beta
            } else if excess > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            rhs - math::dot(&dg, &dtheta)
        }
        PropertyId::ExpansiveGeneral | PropertyId::ExpansiveConvex | PropertyId::ContractiveStrongly => {
            let alpha = p.alpha.unwrap_or(0.0);
            let mut u1 = theta1.to_vec();
            let mut u2 = theta2.to_vec();
            math::axpy(-alpha, &g1, &mut u1);
            math::axpy(-alpha, &g2, &mut u2);
            let factor = match property {
                PropertyId::ExpansiveGeneral => 1.0 + alpha * p.beta,
                PropertyId::ExpansiveConvex => 1.0,
                _ => 1.0 - alpha * p.gamma.unwrap_or(0.0),
            };
            math::dist2(&u1, &u2) - (factor * r + alpha * p.eta)
        }
    }
}

fn run_check(sampler: &PairSampler<'_>, n: u64, property: PropertyId, params: CheckParams) -> Result<PropertyReport> {
    ensure!(params.beta >= 0.0 && params.eta >= 0.0, "beta and eta must be >= 0");
    let obj = sampler.objective();
    let symmetric = property == PropertyId::Descent;
    let mut report = PropertyReport {
        property,
        params,
        pairs_tested: 0,
        straddling_pairs: 0,
        violation_count: 0,
        violations: Vec::new(),
        worst_slack: f64::NEG_INFINITY,
    };
    for j in 0..n {
        let mut p = sampler.pair(j)?;
        let mut s = slack(obj, property, &params, &p.theta1, &p.theta2, &p.z);
        if symmetric {
            let s_rev = slack(obj, property, &params, &p.theta2, &p.theta1, &p.z);
            if s_rev > s {
                core::mem::swap(&mut p.theta1, &mut p.theta2);
                s = s_rev;
            }
        }
        report.pairs_tested += 1;
        report.straddling_pairs += p.straddles as u64;
        report.worst_slack = report.worst_slack.max(s);
        if s > TOLERANCE {
            report.violation_count += 1;
            if report.violations.len() < MAX_STORED_VIOLATIONS {
                report.violations.push(Violation { theta1: p.theta1, theta2: p.theta2, z: p.z, slack: s });
            }
        }
    }
    Ok(report)
}

/// `h(θ₁) − h(θ₂) ≤ ⟨∇h(θ₂), θ₁ − θ₂⟩ + (β/2)‖Δθ‖² + η‖Δθ‖`, checked in both orders.
pub fn check_descent(sampler: &PairSampler<'_>, n: u64, beta: f64, eta: f64) -> Result<PropertyReport> {
    run_check(sampler, n, PropertyId::Descent, CheckParams { beta, eta, alpha: None, gamma: None })
}

/// `⟨∇h(θ₁) − ∇h(θ₂), θ₁ − θ₂⟩ ≥ (1/β)([‖∇h(θ₁) − ∇h(θ₂)‖ − η]₊)²`; convex families only.
pub fn check_cocoercive(sampler: &PairSampler<'_>, n: u64, beta: f64, eta: f64) -> Result<PropertyReport> {
    if !sampler.objective().is_convex() {
        return Err(Error::unsupported("co-coercivity is only defined for convex families"));
    }
    run_check(sampler, n, PropertyId::Cocoercive, CheckParams { beta, eta, alpha: None, gamma: None })
}

/// Expansiveness of the update `G(θ) = θ − α∇h(θ, z)` in the given mode.
/// `beta`, `eta` and `gamma` default to the objective's constants.
pub fn check_update_expansiveness(
    sampler: &PairSampler<'_>,
    n: u64,
    alpha: f64,
    mode: UpdateMode,
    params: Option<CheckParams>,
) -> Result<PropertyReport> {
    let obj = sampler.objective();
    let c = obj.constants();
    let mut params = params.unwrap_or(CheckParams { beta: c.beta, eta: c.eta, alpha: None, gamma: c.gamma });
    ensure!(alpha >= 0.0, "step size must be >= 0");
    params.alpha = Some(alpha);
    let property = match mode {
        UpdateMode::General => PropertyId::ExpansiveGeneral,
        UpdateMode::Convex | UpdateMode::Strongly => {
            if !obj.is_convex() {
                return Err(Error::unsupported("convex update modes need a convex family"));
            }
            ensure!(
                params.beta == 0.0 || alpha <= 1.0 / params.beta * (1.0 + 1e-12),
                "alpha = {alpha} exceeds 1/beta = {}",
                1.0 / params.beta
            );
            if mode == UpdateMode::Strongly {
                let g = params.gamma.filter(|g| *g > 0.0);
                ensure!(g.is_some(), "strongly-convex mode needs gamma > 0");
                PropertyId::ContractiveStrongly
            } else {
                PropertyId::ExpansiveConvex
            }
        }
    };
    run_check(sampler, n, property, params)
}

/// Human-readable label for report files.
pub fn property_name(p: PropertyId) -> String {
    String::from(match p {
        PropertyId::Descent => "descent",
        PropertyId::Cocoercive => "cocoercive",
        PropertyId::ExpansiveGeneral => "expansive_general",
        PropertyId::ExpansiveConvex => "expansive_convex",
        PropertyId::ContractiveStrongly => "contractive_strongly",
    })
}
