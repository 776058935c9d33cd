//! Loss families `h(θ, z)` with subgradient oracles and analytic constants.
//!
//! Every family is a smooth base loss `g(θ, z)`, optionally wrapped in the
//! adversarial surrogate `h(θ, z) = max_{‖z' − z‖_p ≤ ε} g(θ, z')`, except the
//! lower-bound construction which is piecewise linear on its own.
//!
//! Subgradients follow Danskin: `∇_θ g(θ, z*)` at the inner maximizer `z*`.
//! Where several maximizers or several max-pieces tie, the lowest-index one
//! wins (`z − ε` before `z + ε`, enumeration order for vertices, smallest
//! coordinate for piecewise maxima). That keeps every trajectory replayable.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::math;
use crate::rng::{self, Rng};

pub type Example = Vec<f64>;

/// Relative slack allowed when checking `‖θ‖ ≤ R` after a projection.
const DOMAIN_TOL: f64 = 1e-9;

/// `sup_{t ∈ [−1,1], y ∈ [−1,1]} |d/du (tanh u − y)²| = 64/27`.
const TANH_SQ_D1: f64 = 64.0 / 27.0;
/// `sup_{t, y} |d²/du² (tanh u − y)²|`, ≈ 2.464937 (rounded up).
const TANH_SQ_D2: f64 = 2.465;

/// Largest perturbation dimension for which the ℓ∞ vertex enumeration is allowed.
const MAX_ENUM_DIM: usize = 16;

/// Exponent `p ≥ 1` of the perturbation norm; `p = ∞` serializes as `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PNorm(f64);

impl PNorm {
    pub const ONE: PNorm = PNorm(1.0);
    pub const TWO: PNorm = PNorm(2.0);
    pub const INF: PNorm = PNorm(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        ensure!(p >= 1.0, "p-norm exponent must be >= 1, got {p}");
        Ok(PNorm(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_inf(self) -> bool {
        self.0.is_infinite()
    }

    /// Norms whose ball is a polytope with a finite, enumerable vertex set.
    fn is_polyhedral(self) -> bool {
        self.is_inf() || self.0 == 1.0
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for PNorm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        if self.is_inf() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let p = match Raw::deserialize(d)? {
            Raw::Num(p) => p,
            Raw::Str(s) if s == "inf" || s == "infinity" => f64::INFINITY,
            Raw::Str(s) => return Err(serde::de::Error::custom(alloc::format!("bad p-norm {s:?}"))),
        };
        PNorm::new(p).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerSolver {
    #[default]
    ClosedForm,
    EndpointEnumeration,
    /// Projected steepest ascent started at `z`; `step_size` defaults to `ε/4`.
    Pgd {
        #[serde(default = "default_pgd_steps")]
        steps: u32,
        #[serde(default)]
        step_size: Option<f64>,
    },
}

fn default_pgd_steps() -> u32 {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarialConfig {
    pub epsilon: f64,
    pub p: PNorm,
    #[serde(default)]
    pub solver: InnerSolver,
    /// Declared worst-case attack sub-optimality; only the bound calculator reads it.
    #[serde(default)]
    pub delta_epsilon: f64,
}

impl AdversarialConfig {
    pub fn new(epsilon: f64, p: PNorm) -> Self {
        AdversarialConfig { epsilon, p, solver: InnerSolver::ClosedForm, delta_epsilon: 0.0 }
    }

    pub fn with_solver(mut self, solver: InnerSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epsilon >= 0.0, "epsilon must be >= 0");
        ensure!(self.delta_epsilon >= 0.0, "delta_epsilon must be >= 0");
        ensure!(
            self.delta_epsilon <= 2.0 * self.epsilon + 1e-15,
            "delta_epsilon {} exceeds 2*epsilon",
            self.delta_epsilon
        );
        if let InnerSolver::Pgd { steps, step_size } = &self.solver {
            ensure!(*steps > 0, "pgd needs at least one step");
            if let Some(s) = step_size {
                ensure!(*s > 0.0, "pgd step size must be positive");
            }
        }
        Ok(())
    }

    fn pgd_step(&self) -> f64 {
        match self.solver {
            InnerSolver::Pgd { step_size: Some(s), .. } => s,
            _ => self.epsilon / 4.0,
        }
    }
}

/// Parameters of the piecewise-linear lower-bound construction
/// `h(θ, 0) = η·max{0, x₁ − v, …, x_T − v}`, `h(θ, 1) = ⟨r, θ⟩/K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardInstanceParams {
    pub d: usize,
    pub horizon: usize,
    pub v: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub eta: f64,
}

impl HardInstanceParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.horizon >= 1, "horizon must be positive");
        ensure!(self.d >= self.horizon, "hard instance needs d >= T (d={}, T={})", self.d, self.horizon);
        ensure!(self.v >= 0.0, "v must be >= 0");
        ensure!(self.k > 0.0, "K must be positive");
        ensure!(self.eta > 0.0, "eta must be positive");
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `g(θ, z) = (a/2)‖θ − z‖² + (λ/2)‖θ‖²` with `‖z‖ ≤ example_radius`.
    Quadratic {
        dim: usize,
        #[serde(default = "one")]
        curvature: f64,
        #[serde(default)]
        ridge: f64,
        example_radius: f64,
    },
    /// `g(θ, (x, y)) = log(1 + exp(−y θᵀx))`, `y ∈ {−1, 1}`, `‖x‖ ≤ feature_radius`.
    Logistic { dim: usize, feature_radius: f64 },
    /// `g(θ, (x, y)) = (tanh(θᵀx) − y)²`, `y ∈ [−1, 1]`; bounded by 4, non-convex.
    TanhSquare { dim: usize, feature_radius: f64 },
    HardInstance(HardInstanceParams),
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Estimated,
    /// Supplied by configuration, overriding the analytic value.
    Declared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRecord {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_theta")]
    pub l_theta: f64,
    #[serde(rename = "L_z")]
    pub l_z: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: Option<f64>,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    pub provenance: Provenance,
}

/// Optional overrides for [`ConstantsRecord`] fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsOverride {
    #[serde(rename = "L", default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(rename = "B", default)]
    pub b: Option<f64>,
}

/// JSON-facing description of an objective; the family's tag and parameters
/// sit next to the other keys: `{"family": "logistic", "dim": 2, …, "domain_radius": 5}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    #[serde(flatten)]
    pub family: Family,
    /// Radius `R` of the feasible θ-ball. Defaults to unbounded for the hard
    /// instance; required for every other family.
    #[serde(default)]
    pub domain_radius: Option<f64>,
    #[serde(default)]
    pub adversarial: Option<AdversarialConfig>,
    #[serde(default)]
    pub constants: Option<ConstantsOverride>,
}

/// Sampling law for examples `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExampleDistribution {
    /// `z` uniform in the Euclidean ball (quadratic family).
    UniformBall { radius: f64 },
    /// `x` uniform in the feature ball, label from a linear teacher `w`:
    /// `sign(wᵀx)` flipped with probability `label_noise` (logistic), or
    /// `clamp(tanh(wᵀx) + label_noise·U[−1, 1])` (tanh-square).
    Teacher {
        teacher: Vec<f64>,
        #[serde(default)]
        label_noise: f64,
    },
    /// `z = 1` with probability `p_one`, else `z = 0` (hard instance).
    Bernoulli { p_one: f64 },
    /// Uniform over a fixed list of examples.
    Finite { points: Vec<Example> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    family: Family,
    domain_radius: f64,
    adversarial: Option<AdversarialConfig>,
    constants: ConstantsRecord,
}

impl Objective {
    pub fn new(family: Family, domain_radius: f64, adversarial: Option<AdversarialConfig>) -> Result<Self> {
        ensure!(domain_radius > 0.0, "domain radius must be positive");
        match &family {
            Family::Quadratic { dim, curvature, ridge, example_radius } => {
                ensure!(*dim > 0, "dim must be positive");
                ensure!(*curvature >= 0.0 && *ridge >= 0.0, "curvature and ridge must be >= 0");
                ensure!(*example_radius >= 0.0, "example radius must be >= 0");
            }
            Family::Logistic { dim, feature_radius } | Family::TanhSquare { dim, feature_radius } => {
                ensure!(*dim > 0, "dim must be positive");
                ensure!(*feature_radius > 0.0, "feature radius must be positive");
            }
            Family::HardInstance(p) => {
                p.validate()?;
                ensure!(adversarial.is_none(), "the hard instance takes no adversarial wrapper");
            }
        }
        if let Some(adv) = &adversarial {
            adv.validate()?;
            let m = perturb_dim(&family);
            match adv.solver {
                InnerSolver::ClosedForm => {
                    if matches!(family, Family::Quadratic { .. }) {
                        ensure!(
                            adv.p.is_polyhedral() || adv.p.value() == 2.0,
                            "closed-form inner max for the quadratic family needs p in {{1, 2, inf}}"
                        );
                    }
                }
                InnerSolver::EndpointEnumeration => {
                    ensure!(
                        m == 1 || adv.p.value() == 1.0 || (adv.p.is_inf() && m <= MAX_ENUM_DIM),
                        "endpoint enumeration needs a polyhedral ball (p = 1, or p = inf with dim <= {MAX_ENUM_DIM}) or a 1-D perturbation"
                    );
                }
                InnerSolver::Pgd { .. } => {}
            }
        }
        let constants = analytic_constants(&family, domain_radius, adversarial.as_ref());
        Ok(Objective { family, domain_radius, adversarial, constants })
    }

    pub fn from_config(cfg: &ObjectiveConfig) -> Result<Self> {
        let radius = match (cfg.domain_radius, &cfg.family) {
            (Some(r), _) => r,
            (None, Family::HardInstance(_)) => f64::INFINITY,
            (None, _) => return Err(Error::rejected("domain_radius is required for this family")),
        };
        let obj = Objective::new(cfg.family.clone(), radius, cfg.adversarial.clone())?;
        Ok(match &cfg.constants {
            Some(o) => obj.with_overrides(o)?,
            None => obj,
        })
    }

    /// Scalar-shift quadratic `½(θ − z)²` on `[−R, R]`, adversarially wrapped
    /// with radius `ε` (no wrapper when `ε = 0`).
    pub fn scalar_quadratic(epsilon: f64, domain_radius: f64, example_radius: f64) -> Result<Self> {
        let adv = (epsilon > 0.0).then(|| AdversarialConfig::new(epsilon, PNorm::INF));
        Objective::new(
            Family::Quadratic { dim: 1, curvature: 1.0, ridge: 0.0, example_radius },
            domain_radius,
            adv,
        )
    }

    pub fn with_overrides(mut self, o: &ConstantsOverride) -> Result<Self> {
        let c = &mut self.constants;
        for v in [o.l, o.beta, o.eta, o.gamma, o.b].into_iter().flatten() {
            ensure!(v >= 0.0, "declared constants must be >= 0");
        }
        let mut touched = false;
        if let Some(v) = o.l {
            c.l = v;
            touched = true;
        }
        if let Some(v) = o.beta {
            c.beta = v;
            touched = true;
        }
        if let Some(v) = o.eta {
            c.eta = v;
            touched = true;
        }
        if let Some(v) = o.gamma {
            c.gamma = Some(v);
            touched = true;
        }
        if let Some(v) = o.b {
            c.b = Some(v);
            touched = true;
        }
        if touched {
            c.provenance = Provenance::Declared;
        }
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn adversarial(&self) -> Option<&AdversarialConfig> {
        self.adversarial.as_ref()
    }

    pub fn constants(&self) -> &ConstantsRecord {
        &self.constants
    }

    pub fn epsilon(&self) -> f64 {
        self.adversarial.as_ref().map_or(0.0, |a| a.epsilon)
    }

    pub fn param_dim(&self) -> usize {
        match &self.family {
            Family::Quadratic { dim, .. } | Family::Logistic { dim, .. } | Family::TanhSquare { dim, .. } => *dim,
            Family::HardInstance(p) => p.d,
        }
    }

    pub fn example_dim(&self) -> usize {
        match &self.family {
            Family::Quadratic { dim, .. } => *dim,
            Family::Logistic { dim, .. } | Family::TanhSquare { dim, .. } => dim + 1,
            Family::HardInstance(_) => 1,
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self.family, Family::TanhSquare { .. })
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        self.constants.gamma.filter(|g| *g > 0.0)
    }

    /// False when the inner maximum is only approximated (PGD), in which case
    /// the Danskin direction is an approximate subgradient.
    pub fn exact_inner(&self) -> bool {
        !matches!(self.adversarial.as_ref().map(|a| &a.solver), Some(InnerSolver::Pgd { .. }))
    }

    pub fn check_domain(&self, theta: &[f64]) -> Result<()> {
        ensure!(
            theta.len() == self.param_dim(),
            "parameter has dimension {}, expected {}",
            theta.len(),
            self.param_dim()
        );
        if self.domain_radius.is_finite() {
            let n = math::norm2(theta);
            ensure!(
                n <= self.domain_radius * (1.0 + DOMAIN_TOL),
                "parameter norm {n} exceeds domain radius {}",
                self.domain_radius
            );
        }
        Ok(())
    }

    pub fn check_example(&self, z: &[f64]) -> Result<()> {
        ensure!(z.len() == self.example_dim(), "example has dimension {}, expected {}", z.len(), self.example_dim());
        match &self.family {
            Family::Quadratic { example_radius, .. } => {
                ensure!(math::norm2(z) <= example_radius * (1.0 + DOMAIN_TOL), "example outside its ball");
            }
            Family::Logistic { dim, feature_radius } => {
                ensure!(math::norm2(&z[..*dim]) <= feature_radius * (1.0 + DOMAIN_TOL), "features outside their ball");
                ensure!(z[*dim] == 1.0 || z[*dim] == -1.0, "logistic label must be -1 or 1");
            }
            Family::TanhSquare { dim, feature_radius } => {
                ensure!(math::norm2(&z[..*dim]) <= feature_radius * (1.0 + DOMAIN_TOL), "features outside their ball");
                ensure!((-1.0..=1.0).contains(&z[*dim]), "tanh-square label must lie in [-1, 1]");
            }
            Family::HardInstance(_) => {
                ensure!(z[0] == 0.0 || z[0] == 1.0, "hard-instance examples are 0 or 1");
            }
        }
        Ok(())
    }

    /// `h(θ, z)`.
    pub fn value(&self, theta: &[f64], z: &[f64]) -> Result<f64> {
        self.check_domain(theta)?;
        self.check_example(z)?;
        Ok(self.eval(theta, z).0)
    }

    /// An element of `∂_θ h(θ, z)` chosen by the lowest-index rule.
    pub fn subgradient(&self, theta: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(theta)?;
        self.check_example(z)?;
        Ok(self.eval(theta, z).1)
    }

    pub fn value_and_subgradient(&self, theta: &[f64], z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_domain(theta)?;
        self.check_example(z)?;
        Ok(self.eval(theta, z))
    }

    /// Inner maximizer `z*` with `‖z* − z‖_p ≤ ε` and the attained `g(θ, z*)`.
    pub fn inner_maximize(&self, theta: &[f64], z: &[f64]) -> Result<(Example, f64)> {
        let adv = self
            .adversarial
            .as_ref()
            .ok_or_else(|| Error::unsupported("inner_maximize on a non-adversarial family"))?;
        self.check_domain(theta)?;
        self.check_example(z)?;
        let delta = self.inner_delta(adv, theta, z);
        let zs = perturbed(&self.family, z, &delta);
        let val = self.base_value(theta, &zs);
        Ok((zs, val))
    }

    /// Unchecked evaluation; callers guarantee the domain.
    pub(crate) fn eval(&self, theta: &[f64], z: &[f64]) -> (f64, Vec<f64>) {
        if let Family::HardInstance(p) = &self.family {
            return hard_eval(p, theta, z);
        }
        match &self.adversarial {
            Some(adv) if adv.epsilon > 0.0 => {
                let delta = self.inner_delta(adv, theta, z);
                let zs = perturbed(&self.family, z, &delta);
                (self.base_value(theta, &zs), self.base_grad_theta(theta, &zs))
            }
            _ => (self.base_value(theta, z), self.base_grad_theta(theta, z)),
        }
    }

    /// Empirical risk `R_S(θ) = (1/n) Σ h(θ, z_i)`.
    pub fn empirical_risk(&self, theta: &[f64], data: &[Example]) -> f64 {
        data.iter().map(|z| self.eval(theta, z).0).sum::<f64>() / data.len() as f64
    }

    /// `(R_S(θ), (1/n) Σ d(θ, z_i))`.
    pub fn empirical_risk_and_gradient(&self, theta: &[f64], data: &[Example]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; theta.len()];
        let mut r = 0.0;
        for z in data {
            let (v, d) = self.eval(theta, z);
            r += v;
            math::axpy(1.0, &d, &mut g);
        }
        let inv = 1.0 / data.len() as f64;
        math::scale(inv, &mut g);
        (r * inv, g)
    }

    /// Discrete label of the max-piece active at `(θ, z)`. Points with
    /// different labels are separated by a nonsmooth locus of `h(·, z)`.
    pub fn active_piece(&self, theta: &[f64], z: &[f64]) -> u64 {
        if let Family::HardInstance(p) = &self.family {
            return if z[0] == 0.0 { hard_argmax(p, theta) as u64 } else { u64::MAX };
        }
        let Some(adv) = self.adversarial.as_ref().filter(|a| a.epsilon > 0.0) else {
            return 0;
        };
        let delta = self.inner_delta(adv, theta, z);
        if adv.p.is_polyhedral() || matches!(adv.solver, InnerSolver::EndpointEnumeration) {
            delta.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, d| {
                let code = if *d > 0.0 {
                    2
                } else if *d < 0.0 {
                    1
                } else {
                    3
                };
                (h ^ code).wrapping_mul(0x100_0000_01b3)
            })
        } else if let Family::TanhSquare { dim, .. } = &self.family {
            // which end of the interval θᵀδ ∈ [−ε‖θ‖_q, ε‖θ‖_q] won
            (math::dot(&theta[..*dim], &delta) > 0.0) as u64
        } else {
            0
        }
    }

    /// Isolated nonsmooth points of `h(·, z)` that a random segment would
    /// almost surely miss (the `p = 2` wrapper's kink at `θ = z` or `θ = 0`).
    pub fn kink_points(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let Some(adv) = self.adversarial.as_ref().filter(|a| a.epsilon > 0.0) else {
            return Vec::new();
        };
        if adv.p.is_polyhedral() || perturb_dim(&self.family) == 1 {
            return Vec::new();
        }
        let point = match &self.family {
            Family::Quadratic { .. } => z.to_vec(),
            _ => vec![0.0; self.param_dim()],
        };
        if math::norm2(&point) <= self.domain_radius {
            vec![point]
        } else {
            Vec::new()
        }
    }

    pub fn sample_example(&self, dist: &ExampleDistribution, rng: &mut Rng) -> Result<Example> {
        let z = match (dist, &self.family) {
            (ExampleDistribution::UniformBall { radius }, Family::Quadratic { dim, example_radius, .. }) => {
                ensure!(*radius <= *example_radius, "sampling radius exceeds the example ball");
                rng::uniform_ball(rng, *dim, *radius)
            }
            (ExampleDistribution::Teacher { teacher, label_noise }, Family::Logistic { dim, feature_radius }) => {
                ensure!(teacher.len() == *dim, "teacher dimension mismatch");
                let mut x = rng::uniform_ball(rng, *dim, *feature_radius);
                let mut y = math::tie_sign(math::dot(teacher, &x));
                if rng.gen::<f64>() < *label_noise {
                    y = -y;
                }
                x.push(y);
                x
            }
            (ExampleDistribution::Teacher { teacher, label_noise }, Family::TanhSquare { dim, feature_radius }) => {
                ensure!(teacher.len() == *dim, "teacher dimension mismatch");
                let mut x = rng::uniform_ball(rng, *dim, *feature_radius);
                let noise = label_noise * rng.gen_range(-1.0..=1.0);
                let y = (libm::tanh(math::dot(teacher, &x)) + noise).clamp(-1.0, 1.0);
                x.push(y);
                x
            }
            (ExampleDistribution::Bernoulli { p_one }, Family::HardInstance(_)) => {
                ensure!((0.0..=1.0).contains(p_one), "p_one must lie in [0, 1]");
                vec![if rng.gen::<f64>() < *p_one { 1.0 } else { 0.0 }]
            }
            (ExampleDistribution::Finite { points }, _) => {
                ensure!(!points.is_empty(), "finite distribution has no points");
                points[rng.gen_range(0..points.len())].clone()
            }
            _ => return Err(Error::rejected("distribution does not match the objective family")),
        };
        self.check_example(&z)?;
        Ok(z)
    }

    pub fn sample_dataset(&self, dist: &ExampleDistribution, n: usize, rng: &mut Rng) -> Result<Vec<Example>> {
        (0..n).map(|_| self.sample_example(dist, rng)).collect()
    }

    fn inner_delta(&self, adv: &AdversarialConfig, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let m = perturb_dim(&self.family);
        if adv.epsilon == 0.0 {
            return vec![0.0; m];
        }
        match adv.solver {
            InnerSolver::ClosedForm => self.closed_form_delta(adv, theta, z),
            InnerSolver::EndpointEnumeration => self.enumerate_delta(adv, theta, z),
            InnerSolver::Pgd { steps, .. } => self.pgd_delta(adv, steps, theta, z),
        }
    }

    fn closed_form_delta(&self, adv: &AdversarialConfig, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let (p, eps) = (adv.p.value(), adv.epsilon);
        match &self.family {
            // max ‖u − δ‖²: push δ against u = θ − z
            Family::Quadratic { .. } => {
                let neg_u: Vec<f64> = theta.iter().zip(z).map(|(t, zi)| zi - t).collect();
                math::dual_direction(&neg_u, p, eps)
            }
            // max −y θᵀ(x + δ)
            Family::Logistic { dim, .. } => {
                let y = z[*dim];
                let w: Vec<f64> = theta.iter().map(|t| -y * t).collect();
                math::dual_direction(&w, p, eps)
            }
            // (tanh u − y)² is quasi-convex in u, so one end of the interval wins
            Family::TanhSquare { .. } => {
                let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
                let lo = math::dual_direction(&neg, p, eps);
                let hi = math::dual_direction(theta, p, eps);
                let v_lo = self.base_value(theta, &perturbed(&self.family, z, &lo));
                let v_hi = self.base_value(theta, &perturbed(&self.family, z, &hi));
                if v_hi > v_lo {
                    hi
                } else {
                    lo
                }
            }
            Family::HardInstance(_) => unreachable!("validated at construction"),
        }
    }

    /// Vertices of the perturbation polytope, in enumeration order.
    fn vertices(&self, adv: &AdversarialConfig) -> Vec<Vec<f64>> {
        let m = perturb_dim(&self.family);
        let eps = adv.epsilon;
        if m == 1 {
            return vec![vec![-eps], vec![eps]];
        }
        if adv.p.value() == 1.0 {
            let mut out = Vec::with_capacity(2 * m);
            for j in 0..m {
                for s in [-eps, eps] {
                    let mut v = vec![0.0; m];
                    v[j] = s;
                    out.push(v);
                }
            }
            return out;
        }
        (0..1usize << m)
            .map(|mask| (0..m).map(|j| if mask >> j & 1 == 1 { eps } else { -eps }).collect())
            .collect()
    }

    fn enumerate_delta(&self, adv: &AdversarialConfig, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for v in self.vertices(adv) {
            let val = self.base_value(theta, &perturbed(&self.family, z, &v));
            if best.as_ref().is_none_or(|(b, _)| val > *b) {
                best = Some((val, v));
            }
        }
        best.map(|(_, v)| v).unwrap_or_default()
    }

    fn pgd_delta(&self, adv: &AdversarialConfig, steps: u32, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let p = adv.p.value();
        let step = adv.pgd_step();
        let mut delta = vec![0.0; perturb_dim(&self.family)];
        let mut best_val = self.base_value(theta, z);
        let mut best = delta.clone();
        for _ in 0..steps {
            let zs = perturbed(&self.family, z, &delta);
            let g = self.base_grad_z(theta, &zs);
            let dir = math::dual_direction(&g, p, step);
            math::axpy(1.0, &dir, &mut delta);
            math::project_lp_ball(&mut delta, p, adv.epsilon);
            let val = self.base_value(theta, &perturbed(&self.family, z, &delta));
            if val > best_val {
                best_val = val;
                best.clone_from(&delta);
            }
        }
        best
    }

    fn base_value(&self, theta: &[f64], z: &[f64]) -> f64 {
        match &self.family {
            Family::Quadratic { curvature, ridge, .. } => {
                let d = math::dist2(theta, z);
                0.5 * curvature * d * d + 0.5 * ridge * math::dot(theta, theta)
            }
            Family::Logistic { dim, .. } => softplus(-z[*dim] * math::dot(theta, &z[..*dim])),
            Family::TanhSquare { dim, .. } => {
                let r = libm::tanh(math::dot(theta, &z[..*dim])) - z[*dim];
                r * r
            }
            Family::HardInstance(p) => hard_eval(p, theta, z).0,
        }
    }

    fn base_grad_theta(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        match &self.family {
            Family::Quadratic { curvature, ridge, .. } => {
                theta.iter().zip(z).map(|(t, zi)| curvature * (t - zi) + ridge * t).collect()
            }
            Family::Logistic { dim, .. } => {
                let y = z[*dim];
                let s = sigmoid(-y * math::dot(theta, &z[..*dim]));
                z[..*dim].iter().map(|x| -y * s * x).collect()
            }
            Family::TanhSquare { dim, .. } => {
                let c = tanh_sq_deriv(math::dot(theta, &z[..*dim]), z[*dim]);
                z[..*dim].iter().map(|x| c * x).collect()
            }
            Family::HardInstance(p) => hard_eval(p, theta, z).1,
        }
    }

    /// Gradient of `g(θ, ·)` with respect to the perturbed coordinates.
    fn base_grad_z(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        match &self.family {
            Family::Quadratic { curvature, .. } => theta.iter().zip(z).map(|(t, zi)| curvature * (zi - t)).collect(),
            Family::Logistic { dim, .. } => {
                let y = z[*dim];
                let s = sigmoid(-y * math::dot(theta, &z[..*dim]));
                theta.iter().map(|t| -y * s * t).collect()
            }
            Family::TanhSquare { dim, .. } => {
                let c = tanh_sq_deriv(math::dot(theta, &z[..*dim]), z[*dim]);
                theta.iter().map(|t| c * t).collect()
            }
            Family::HardInstance(_) => unreachable!("validated at construction"),
        }
    }
}

fn perturb_dim(family: &Family) -> usize {
    match family {
        Family::Quadratic { dim, .. } | Family::Logistic { dim, .. } | Family::TanhSquare { dim, .. } => *dim,
        Family::HardInstance(_) => 0,
    }
}

fn perturbed(family: &Family, z: &[f64], delta: &[f64]) -> Example {
    let mut out = z.to_vec();
    let m = perturb_dim(family);
    for (o, d) in out[..m].iter_mut().zip(delta) {
        *o += d;
    }
    out
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `d/du (tanh u − y)²`.
fn tanh_sq_deriv(u: f64, y: f64) -> f64 {
    let t = libm::tanh(u);
    2.0 * (t - y) * (1.0 - t * t)
}

/// Index of the winning piece of `max{0, x₁ − v, …, x_T − v}`: 0 for the
/// constant piece, `j` for `x_j − v`. Lowest index wins ties.
fn hard_argmax(p: &HardInstanceParams, theta: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = 0.0;
    for (j, x) in theta[..p.horizon].iter().enumerate() {
        if x - p.v > best_val {
            best_val = x - p.v;
            best = j + 1;
        }
    }
    best
}

fn hard_eval(p: &HardInstanceParams, theta: &[f64], z: &[f64]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; theta.len()];
    if z[0] == 0.0 {
        let j = hard_argmax(p, theta);
        if j == 0 {
            return (0.0, g);
        }
        g[j - 1] = p.eta;
        (p.eta * (theta[j - 1] - p.v), g)
    } else {
        let inv_k = 1.0 / p.k;
        for gj in g[..p.horizon].iter_mut() {
            *gj = -inv_k;
        }
        (-theta[..p.horizon].iter().sum::<f64>() * inv_k, g)
    }
}

fn analytic_constants(family: &Family, radius: f64, adv: Option<&AdversarialConfig>) -> ConstantsRecord {
    let eps = adv.map_or(0.0, |a| a.epsilon);
    let c = adv.map_or(1.0, |a| math::l2_over_lp(perturb_dim(family), a.p.value()));
    match family {
        Family::Quadratic { curvature: a, ridge, example_radius, .. } => {
            let reach = radius + example_radius + eps * c;
            let l_z = a * c;
            ConstantsRecord {
                l: a * reach + ridge * radius,
                l_theta: a + ridge,
                l_z,
                beta: a + ridge,
                eta: 2.0 * l_z * eps,
                gamma: Some(a + ridge),
                b: Some(0.5 * a * reach * reach + 0.5 * ridge * radius * radius),
                provenance: Provenance::Analytic,
            }
        }
        Family::Logistic { feature_radius, .. } => {
            let xs = feature_radius + eps * c;
            let l_z = c * (1.0 + xs * radius / 4.0);
            ConstantsRecord {
                l: xs,
                l_theta: xs * xs / 4.0,
                l_z,
                beta: xs * xs / 4.0,
                eta: 2.0 * l_z * eps,
                gamma: None,
                b: Some(softplus(radius * xs)),
                provenance: Provenance::Analytic,
            }
        }
        Family::TanhSquare { feature_radius, .. } => {
            let xs = feature_radius + eps * c;
            let l_z = c * (TANH_SQ_D1 + TANH_SQ_D2 * xs * radius);
            ConstantsRecord {
                l: TANH_SQ_D1 * xs,
                l_theta: TANH_SQ_D2 * xs * xs,
                l_z,
                beta: TANH_SQ_D2 * xs * xs,
                eta: 2.0 * l_z * eps,
                gamma: None,
                b: Some(4.0),
                provenance: Provenance::Analytic,
            }
        }
        Family::HardInstance(p) => {
            // Two distinct active pieces e_i, e_j differ by η√2 in gradient.
            let jump = if p.horizon >= 2 { core::f64::consts::SQRT_2 * p.eta } else { p.eta };
            ConstantsRecord {
                l: p.eta.max(math::sqrt(p.horizon as f64) / p.k),
                l_theta: 0.0,
                l_z: 0.0,
                beta: 0.0,
                eta: jump,
                gamma: None,
                b: None,
                provenance: Provenance::Analytic,
            }
        }
    }
}

/// Builds the lower-bound construction and its neighboring datasets:
/// `S` holds one `z = 1` (at index 1) and `n − 1` copies of `z = 0`;
/// `S'` holds `n` copies of `z = 0`.
pub fn make_hard_instance(params: HardInstanceParams, n: usize) -> Result<(Objective, crate::stability::NeighborPair)> {
    ensure!(n >= 1, "n must be positive");
    let obj = Objective::new(Family::HardInstance(params), f64::INFINITY, None)?;
    let mut s = vec![vec![0.0]; n];
    s[0] = vec![1.0];
    let s_prime = vec![vec![0.0]; n];
    let pair = crate::stability::NeighborPair::new(s, s_prime, 1)?;
    Ok((obj, pair))
}
