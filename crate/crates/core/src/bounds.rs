//! Closed-form stability, optimization and trade-off bounds.
//!
//! All functions are pure. Step sizes enter through the slice `alphas`
//! (`α_1 … α_T`); the string-keyed [`evaluate`] front end is what the CLI
//! calls.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::math::sqrt;

fn non_negative(name: &str, v: f64) -> Result<()> {
    ensure!(v >= 0.0 && v.is_finite(), "{name} must be a finite non-negative number, got {v}");
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    ensure!(v > 0.0 && v.is_finite(), "{name} must be positive, got {v}");
    Ok(())
}

/// `n > 0`; `+∞` is accepted for the large-sample limit.
fn sample_size(n: f64) -> Result<()> {
    ensure!(n > 0.0, "n must be positive (use inf for the n -> inf limit), got {n}");
    Ok(())
}

fn alpha_sum(alphas: &[f64]) -> Result<f64> {
    for a in alphas {
        non_negative("alpha_t", *a)?;
    }
    Ok(alphas.iter().sum())
}

/// `L(η + 2L/n) Σα_t`: generalization gap of convex SGD.
pub fn ub_convex(l: f64, eta: f64, n: f64, alphas: &[f64]) -> Result<f64> {
    ub_convex_sum(l, eta, n, alpha_sum(alphas)?)
}

pub fn ub_convex_sum(l: f64, eta: f64, n: f64, sum_alpha: f64) -> Result<f64> {
    non_negative("L", l)?;
    non_negative("eta", eta)?;
    sample_size(n)?;
    non_negative("sum_alpha", sum_alpha)?;
    Ok(l * (eta + 2.0 * l / n) * sum_alpha)
}

/// `(2 L L_z (ε + Δε) + 2L²/n) Σα_t` for attacks that miss the inner max by up to `Δε`.
pub fn ub_convex_subopt(l: f64, l_z: f64, eps: f64, delta_eps: f64, n: f64, alphas: &[f64]) -> Result<f64> {
    ub_convex_subopt_sum(l, l_z, eps, delta_eps, n, alpha_sum(alphas)?)
}

pub fn ub_convex_subopt_sum(l: f64, l_z: f64, eps: f64, delta_eps: f64, n: f64, sum_alpha: f64) -> Result<f64> {
    for (k, v) in [("L", l), ("L_z", l_z), ("epsilon", eps), ("delta_epsilon", delta_eps), ("sum_alpha", sum_alpha)] {
        non_negative(k, v)?;
    }
    sample_size(n)?;
    Ok((2.0 * l * l_z * (eps + delta_eps) + 2.0 * l * l / n) * sum_alpha)
}

/// `(Lη/2 + L²/n) Σα_t`: the same bound for the uniformly averaged iterate.
pub fn ub_swa(l: f64, eta: f64, n: f64, alphas: &[f64]) -> Result<f64> {
    ub_swa_sum(l, eta, n, alpha_sum(alphas)?)
}

pub fn ub_swa_sum(l: f64, eta: f64, n: f64, sum_alpha: f64) -> Result<f64> {
    non_negative("L", l)?;
    non_negative("eta", eta)?;
    sample_size(n)?;
    non_negative("sum_alpha", sum_alpha)?;
    Ok((l * eta / 2.0 + l * l / n) * sum_alpha)
}

/// `Lη/γ + 2L²/(γn)`, independent of the horizon.
pub fn ub_strongly_convex(l: f64, eta: f64, gamma: f64, n: f64) -> Result<f64> {
    non_negative("L", l)?;
    non_negative("eta", eta)?;
    positive("gamma", gamma)?;
    sample_size(n)?;
    Ok(l * eta / gamma + 2.0 * l * l / (gamma * n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonconvexBound {
    pub value: f64,
    /// Minimizing burn-in `t₀ ∈ [1, n]`.
    pub t0: u64,
    /// `(B L_θ + (2L² + Lηn) T) / (β(n−1))`, reported when `βc = 1`.
    pub simplified: Option<f64>,
}

/// `B t₀/(n−1) + (2L² + Lηn)/(β(n−1)) · (T/t₀)^{βc}` at a fixed `t₀`.
#[allow(clippy::too_many_arguments)]
pub fn ub_nonconvex_at(b: f64, beta: f64, l: f64, eta: f64, n: u64, t: u64, c: f64, t0: u64) -> Result<f64> {
    non_negative("B", b)?;
    positive("beta", beta)?;
    non_negative("L", l)?;
    non_negative("eta", eta)?;
    positive("c", c)?;
    ensure!(n >= 2, "non-convex bound needs n >= 2");
    ensure!(t0 >= 1 && t0 <= n, "t0 must lie in [1, n]");
    let nf = n as f64;
    let q = beta * c;
    let growth = libm::pow(t as f64 / t0 as f64, q);
    Ok(b * t0 as f64 / (nf - 1.0) + (2.0 * l * l + l * eta * nf) / (beta * (nf - 1.0)) * growth)
}

/// Minimum of [`ub_nonconvex_at`] over every integer `t₀ ∈ [1, n]`.
#[allow(clippy::too_many_arguments)]
pub fn ub_nonconvex(b: f64, beta: f64, l: f64, eta: f64, n: u64, t: u64, c: f64, l_theta: f64) -> Result<NonconvexBound> {
    let mut best = (f64::INFINITY, 1);
    for t0 in 1..=n {
        let v = ub_nonconvex_at(b, beta, l, eta, n, t, c, t0)?;
        if v < best.0 {
            best = (v, t0);
        }
    }
    let simplified = ((beta * c - 1.0).abs() < 1e-12).then(|| {
        let nf = n as f64;
        (b * l_theta + (2.0 * l * l + l * eta * nf) * t as f64) / (beta * (nf - 1.0))
    });
    Ok(NonconvexBound { value: best.0, t0: best.1, simplified })
}

/// `(D² + L² Σα_t²) / Σα_t`: optimization error of the best iterate, convex case.
pub fn opt_convex(d: f64, l: f64, alphas: &[f64]) -> Result<f64> {
    let s = alpha_sum(alphas)?;
    opt_convex_sums(d, l, s, alphas.iter().map(|a| a * a).sum())
}

pub fn opt_convex_sums(d: f64, l: f64, sum_alpha: f64, sum_alpha_sq: f64) -> Result<f64> {
    non_negative("D", d)?;
    non_negative("L", l)?;
    non_negative("sum_alpha_sq", sum_alpha_sq)?;
    if sum_alpha == 0.0 {
        return Ok(f64::INFINITY);
    }
    non_negative("sum_alpha", sum_alpha)?;
    Ok((d * d + l * l * sum_alpha_sq) / sum_alpha)
}

/// `L D² / T`: optimization error, strongly convex case.
pub fn opt_strongly_convex(l: f64, d: f64, t: f64) -> Result<f64> {
    non_negative("L", l)?;
    non_negative("D", d)?;
    positive("T", t)?;
    Ok(l * d * d / t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffTerms {
    #[serde(rename = "T")]
    pub t: f64,
    /// `LηTα`, present only under adversarial training.
    pub additional: f64,
    /// `2L²Tα/n`
    pub generalization: f64,
    /// `D²/(Tα)`
    pub optimization: f64,
    /// `L²α`
    pub step: f64,
    pub total: f64,
}

/// Excess-risk bound for fixed step `α` run for `T` steps, term by term.
pub fn tradeoff_fixed(l: f64, eta: f64, n: f64, d: f64, alpha: f64, t: f64) -> Result<TradeoffTerms> {
    non_negative("L", l)?;
    non_negative("eta", eta)?;
    sample_size(n)?;
    non_negative("D", d)?;
    positive("alpha", alpha)?;
    positive("T", t)?;
    let additional = l * eta * t * alpha;
    let generalization = 2.0 * l * l * t * alpha / n;
    let optimization = d * d / (t * alpha);
    let step = l * l * alpha;
    Ok(TradeoffTerms {
        t,
        additional,
        generalization,
        optimization,
        step,
        total: additional + generalization + optimization + step,
    })
}

/// Value of the trade-off at the early-stopping horizon: `2√(Lη + 2L²/n)·D + L²α`.
pub fn early_stopping_value(l: f64, eta: f64, n: f64, d: f64, alpha: f64) -> Result<f64> {
    non_negative("L", l)?;
    non_negative("eta", eta)?;
    sample_size(n)?;
    non_negative("D", d)?;
    non_negative("alpha", alpha)?;
    Ok(2.0 * sqrt(l * eta + 2.0 * l * l / n) * d + l * l * alpha)
}

/// Multipliers standing in for the unspecified constants of an Ω(·) bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundConstants {
    pub c_eta: f64,
    pub c_l: f64,
}

impl Default for LowerBoundConstants {
    fn default() -> Self {
        LowerBoundConstants { c_eta: 1.0, c_l: 1.0 }
    }
}

/// `c_η·ηα√T + c_L·LαT/n`: growth of `E[δ_T]` on the worst-case instance.
pub fn lb_uas(eta: f64, l: f64, alpha: f64, t: f64, n: f64, k: LowerBoundConstants) -> Result<f64> {
    non_negative("eta", eta)?;
    non_negative("L", l)?;
    non_negative("alpha", alpha)?;
    non_negative("T", t)?;
    ensure!(n > 0.0, "n must be positive (use inf for the n -> inf limit)");
    Ok(k.c_eta * eta * alpha * sqrt(t) + k.c_l * l * alpha * t / n)
}

/// `β₂ = L_z L_zθ / μ + L_θ`: gradient-Lipschitz constant of the surrogate
/// when the base loss is μ-strongly concave in `z`.
pub fn beta2_strongly_concave(l_z: f64, l_ztheta: f64, mu: f64, l_theta: f64) -> Result<f64> {
    non_negative("L_z", l_z)?;
    non_negative("L_ztheta", l_ztheta)?;
    positive("mu", mu)?;
    non_negative("L_theta", l_theta)?;
    Ok(l_z * l_ztheta / mu + l_theta)
}

/// `η²/τ² + 2ησ/τ + (2/√T)(D/τ + βσ²/(2τ))`: bound on `min_t E‖∇h(θ_t)‖²`
/// for SGD with `α = 1/√T` on an η-approximately smooth function.
pub fn convergence_bound(eta: f64, tau: f64, sigma: f64, d: f64, beta: f64, t: f64) -> Result<f64> {
    non_negative("eta", eta)?;
    ensure!(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
    non_negative("sigma", sigma)?;
    non_negative("D", d)?;
    non_negative("beta", beta)?;
    positive("T", t)?;
    Ok(eta * eta / (tau * tau) + 2.0 * eta * sigma / tau + 2.0 / sqrt(t) * (d / tau + beta * sigma * sigma / (2.0 * tau)))
}

/// Smallest horizon for which [`convergence_bound`] applies: `(β/(2(1−τ)))²`.
pub fn convergence_min_steps(beta: f64, tau: f64) -> f64 {
    let r = beta / (2.0 * (1.0 - tau));
    r * r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundId {
    UbConvex,
    UbConvexSubopt,
    UbNonconvex,
    UbStronglyConvex,
    UbSwa,
    OptConvex,
    OptStronglyConvex,
    TradeoffFixed,
    Tstar,
    LbUas,
    Beta2StronglyConcave,
    ConvergenceBound,
}

impl BoundId {
    pub const ALL: [BoundId; 12] = [
        BoundId::UbConvex,
        BoundId::UbConvexSubopt,
        BoundId::UbNonconvex,
        BoundId::UbStronglyConvex,
        BoundId::UbSwa,
        BoundId::OptConvex,
        BoundId::OptStronglyConvex,
        BoundId::TradeoffFixed,
        BoundId::Tstar,
        BoundId::LbUas,
        BoundId::Beta2StronglyConcave,
        BoundId::ConvergenceBound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundId::UbConvex => "ub_convex",
            BoundId::UbConvexSubopt => "ub_convex_subopt",
            BoundId::UbNonconvex => "ub_nonconvex",
            BoundId::UbStronglyConvex => "ub_strongly_convex",
            BoundId::UbSwa => "ub_swa",
            BoundId::OptConvex => "opt_convex",
            BoundId::OptStronglyConvex => "opt_strongly_convex",
            BoundId::TradeoffFixed => "tradeoff_fixed",
            BoundId::Tstar => "tstar",
            BoundId::LbUas => "lb_uas",
            BoundId::Beta2StronglyConcave => "beta2_strongly_concave",
            BoundId::ConvergenceBound => "convergence_bound",
        }
    }

    /// Whether the bound depends on the horizon `T` (and can be tabulated over it).
    pub fn has_horizon(self) -> bool {
        !matches!(self, BoundId::UbStronglyConvex | BoundId::Beta2StronglyConcave | BoundId::Tstar)
    }
}

impl FromStr for BoundId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundId::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::rejected(alloc::format!("unknown bound id {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityFlag {
    pub condition: String,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_id: BoundId,
    pub inputs: BTreeMap<String, f64>,
    pub value: f64,
    /// Named components of the value (trade-off terms, chosen `t₀`, …).
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub terms: BTreeMap<String, f64>,
    pub validity: Vec<ValidityFlag>,
}

/// Named scalar inputs for [`evaluate`]. Step sizes are given either as a
/// constant `alpha` with horizon `T`, or directly as `sum_alpha` (and
/// `sum_alpha_sq` where needed).
pub type Inputs = BTreeMap<String, f64>;

struct Args<'a>(&'a Inputs);

impl Args<'_> {
    fn get(&self, k: &str) -> Result<f64> {
        self.0.get(k).copied().ok_or_else(|| Error::rejected(alloc::format!("missing input {k:?}")))
    }

    fn opt(&self, k: &str) -> Option<f64> {
        self.0.get(k).copied()
    }

    fn sum_alpha(&self) -> Result<f64> {
        match self.opt("sum_alpha") {
            Some(s) => Ok(s),
            None => Ok(self.get("alpha")? * self.get("T")?),
        }
    }

    fn sum_alpha_sq(&self) -> Result<f64> {
        match self.opt("sum_alpha_sq") {
            Some(s) => Ok(s),
            None => {
                let a = self.get("alpha")?;
                Ok(a * a * self.get("T")?)
            }
        }
    }

    fn int(&self, k: &str) -> Result<u64> {
        let v = self.get(k)?;
        ensure!(v >= 0.0 && libm::trunc(v) == v, "{k} must be a non-negative integer");
        Ok(v as u64)
    }
}

fn step_flag(args: &Args<'_>) -> Option<ValidityFlag> {
    let beta = args.opt("beta")?;
    let alpha = args.opt("alpha")?;
    Some(ValidityFlag {
        condition: "alpha_t <= 1/beta".to_string(),
        satisfied: beta == 0.0 || alpha <= 1.0 / beta,
    })
}

/// Evaluates a bound from named inputs, annotating (never enforcing) its
/// preconditions.
pub fn evaluate(id: BoundId, inputs: &Inputs) -> Result<BoundReport> {
    let a = Args(inputs);
    let mut terms = BTreeMap::new();
    let mut validity = Vec::new();
    let value = match id {
        BoundId::UbConvex => {
            validity.extend(step_flag(&a));
            ub_convex_sum(a.get("L")?, a.get("eta")?, a.get("n")?, a.sum_alpha()?)?
        }
        BoundId::UbConvexSubopt => {
            let (eps, de) = (a.get("epsilon")?, a.get("delta_epsilon")?);
            validity.push(ValidityFlag { condition: "delta_epsilon <= 2 epsilon".into(), satisfied: de <= 2.0 * eps });
            validity.extend(step_flag(&a));
            ub_convex_subopt_sum(a.get("L")?, a.get("L_z")?, eps, de, a.get("n")?, a.sum_alpha()?)?
        }
        BoundId::UbNonconvex => {
            let (b, beta, l, eta) = (a.get("B")?, a.get("beta")?, a.get("L")?, a.get("eta")?);
            let (n, t, c) = (a.int("n")?, a.int("T")?, a.get("c")?);
            validity.push(ValidityFlag { condition: "alpha_t <= 1/(beta t)".into(), satisfied: beta * c <= 1.0 + 1e-12 });
            match a.opt("t0") {
                Some(_) => {
                    let t0 = a.int("t0")?;
                    terms.insert("t0".into(), t0 as f64);
                    ub_nonconvex_at(b, beta, l, eta, n, t, c, t0)?
                }
                None => {
                    let r = ub_nonconvex(b, beta, l, eta, n, t, c, a.opt("L_theta").unwrap_or(beta))?;
                    terms.insert("t0".into(), r.t0 as f64);
                    if let Some(s) = r.simplified {
                        terms.insert("simplified".into(), s);
                    }
                    r.value
                }
            }
        }
        BoundId::UbStronglyConvex => {
            validity.extend(step_flag(&a));
            ub_strongly_convex(a.get("L")?, a.get("eta")?, a.get("gamma")?, a.get("n")?)?
        }
        BoundId::UbSwa => {
            validity.extend(step_flag(&a));
            ub_swa_sum(a.get("L")?, a.get("eta")?, a.get("n")?, a.sum_alpha()?)?
        }
        BoundId::OptConvex => opt_convex_sums(a.get("D")?, a.get("L")?, a.sum_alpha()?, a.sum_alpha_sq()?)?,
        BoundId::OptStronglyConvex => opt_strongly_convex(a.get("L")?, a.get("D")?, a.get("T")?)?,
        BoundId::TradeoffFixed => {
            let tt = tradeoff_fixed(a.get("L")?, a.get("eta")?, a.get("n")?, a.get("D")?, a.get("alpha")?, a.get("T")?)?;
            terms.insert("additional".into(), tt.additional);
            terms.insert("generalization".into(), tt.generalization);
            terms.insert("optimization".into(), tt.optimization);
            terms.insert("step".into(), tt.step);
            validity.extend(step_flag(&a));
            tt.total
        }
        BoundId::Tstar => {
            let n = a.int("n")?;
            let (l, eta, d, alpha) = (a.get("L")?, a.get("eta")?, a.get("D")?, a.get("alpha")?);
            terms.insert("early_stopping_value".into(), early_stopping_value(l, eta, n as f64, d, alpha)?);
            crate::engine::tstar(d, alpha, l, eta, n)?
        }
        BoundId::LbUas => {
            let k = LowerBoundConstants {
                c_eta: a.opt("c_eta").unwrap_or(1.0),
                c_l: a.opt("c_L").unwrap_or(1.0),
            };
            terms.insert("c_eta".into(), k.c_eta);
            terms.insert("c_L".into(), k.c_l);
            lb_uas(a.get("eta")?, a.get("L")?, a.get("alpha")?, a.get("T")?, a.get("n")?, k)?
        }
        BoundId::Beta2StronglyConcave => {
            beta2_strongly_concave(a.get("L_z")?, a.get("L_ztheta")?, a.get("mu")?, a.get("L_theta")?)?
        }
        BoundId::ConvergenceBound => {
            let (beta, tau, t) = (a.get("beta")?, a.get("tau")?, a.get("T")?);
            validity.push(ValidityFlag {
                condition: "T >= (beta/(2(1-tau)))^2".into(),
                satisfied: tau < 1.0 && t >= convergence_min_steps(beta, tau),
            });
            convergence_bound(a.get("eta")?, tau, a.get("sigma")?, a.get("D")?, beta, t)?
        }
    };
    Ok(BoundReport { bound_id: id, inputs: inputs.clone(), value, terms, validity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn convex_family_worked_values() {
        let alphas = vec![0.01; 1000];
        assert!(close(ub_convex(1.0, 0.1, 100.0, &alphas).unwrap(), 1.2));
        assert!(close(ub_convex(1.0, 0.0, 100.0, &alphas).unwrap(), 0.2));
        assert!(close(ub_convex(1.0, 0.1, f64::INFINITY, &alphas).unwrap(), 1.0));
        assert!(close(ub_swa(1.0, 0.1, 100.0, &alphas).unwrap(), 0.6));
        assert!(close(ub_convex_subopt(1.0, 1.0, 0.1, 0.05, 100.0, &alphas).unwrap(), 3.2));
        assert!(ub_convex(-1.0, 0.1, 100.0, &alphas).is_err());
    }

    #[test]
    fn subopt_reduces_to_convex() {
        let alphas = vec![0.02; 50];
        let a = ub_convex_subopt(1.5, 2.0, 0.1, 0.0, 40.0, &alphas).unwrap();
        let b = ub_convex(1.5, 2.0 * 2.0 * 0.1, 40.0, &alphas).unwrap();
        assert!(close(a, b));
        // Δε = 2ε triples the ε-dependent part
        let full = ub_convex_subopt(1.5, 2.0, 0.1, 0.2, 40.0, &alphas).unwrap();
        let base = ub_convex_subopt(1.5, 2.0, 0.0, 0.0, 40.0, &alphas).unwrap();
        assert!(close(full - base, 3.0 * (a - base)));
    }

    #[test]
    fn nonconvex_worked_value() {
        let v = ub_nonconvex_at(1.0, 1.0, 1.0, 0.1, 101, 10, 1.0, 1).unwrap();
        assert!(close(v, 1.22));
        let r = ub_nonconvex(1.0, 1.0, 1.0, 0.1, 101, 10, 1.0, 1.0).unwrap();
        assert!(close(r.simplified.unwrap(), 1.22));
        assert!(r.value <= v);
        // t0 = T makes the growth factor exactly 1
        let at = ub_nonconvex_at(0.0, 2.0, 1.0, 0.1, 101, 7, 0.3, 7).unwrap();
        assert!(close(at, (2.0 + 10.1) / (2.0 * 100.0)));
    }

    #[test]
    fn strongly_convex_and_optimization() {
        assert!(close(ub_strongly_convex(1.0, 0.05, 0.5, 100.0).unwrap(), 0.14));
        let alphas = vec![0.1; 100];
        assert!(close(opt_convex(1.0, 1.0, &alphas).unwrap(), 0.2));
        assert_eq!(opt_convex(1.0, 1.0, &[0.0; 5]).unwrap(), f64::INFINITY);
        assert!(close(opt_strongly_convex(1.0, 1.0, 100.0).unwrap(), 0.01));
        assert!(close(opt_strongly_convex(1.0, 2.0, 100.0).unwrap(), 0.04));
    }

    #[test]
    fn lower_bound_and_beta2() {
        let k = LowerBoundConstants::default();
        assert!(close(lb_uas(1.0, 1.0, 0.1, 4.0, f64::INFINITY, k).unwrap(), 0.2));
        assert!(close(lb_uas(0.0, 1.0, 0.1, 4.0, 8.0, k).unwrap(), 0.05));
        assert!(close(beta2_strongly_concave(1.0, 1.0, 0.5, 1.0).unwrap(), 3.0));
        assert!(close(beta2_strongly_concave(1.0, 1.0, 1e12, 1.0).unwrap(), 1.0));
    }

    #[test]
    fn convergence_bound_limits() {
        assert!(close(convergence_bound(0.0, 0.5, 0.0, 1.0, 1.0, 100.0).unwrap(), 2.0 * 1.0 / (0.5 * 10.0)));
        assert!((convergence_bound(0.2, 0.5, 0.0, 1.0, 1.0, 1e30).unwrap() - 0.16).abs() < 1e-12);
        assert!(convergence_bound(0.2, 1.0, 0.0, 1.0, 1.0, 10.0).is_err());
    }

    #[test]
    fn tradeoff_terms_and_early_stop() {
        let tt = tradeoff_fixed(1.0, 0.1, 100.0, 1.0, 0.01, 250.0).unwrap();
        assert!(close(tt.additional, 1.0 * 0.1 * 250.0 * 0.01));
        let ts = crate::engine::tstar(1.0, 0.01, 1.0, 0.1, 100).unwrap();
        let at = tradeoff_fixed(1.0, 0.1, 100.0, 1.0, 0.01, ts).unwrap();
        assert!(at.total <= early_stopping_value(1.0, 0.1, 100.0, 1.0, 0.01).unwrap() + 1e-9);
    }

    #[test]
    fn evaluate_dispatch() {
        let mut inputs = Inputs::new();
        for (k, v) in [("L", 1.0), ("eta", 0.1), ("n", 100.0), ("alpha", 0.01), ("T", 1000.0), ("beta", 1.0)] {
            inputs.insert(k.into(), v);
        }
        let r = evaluate(BoundId::UbConvex, &inputs).unwrap();
        assert!(close(r.value, 1.2));
        assert!(r.validity[0].satisfied);
        assert!("ub_nope".parse::<BoundId>().is_err());
        assert_eq!("ub_swa".parse::<BoundId>().unwrap(), BoundId::UbSwa);
        inputs.remove("eta");
        assert!(evaluate(BoundId::UbConvex, &inputs).is_err());
    }
}
