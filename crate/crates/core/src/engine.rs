//! Projected single-example stochastic subgradient descent.
//!
//! `θ^t = Π_R(θ^{t−1} − α_t · d(θ^{t−1}, z_{i_t}))` for `t = 1..T`, where `Π_R`
//! is the Euclidean projection onto the domain ball (a no-op for unbounded
//! domains). Index streams are fully determined by the seed, so a run and
//! its coupled twin on a neighboring dataset can share them exactly.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::math;
use crate::objective::{Example, Objective};
use crate::rng::{self, streams, Rng};
use crate::schedule::ScheduleSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `i_t ~ Uniform{0, …, n−1}` independently at every step.
    WithReplacement,
    /// One seeded permutation, cycled.
    FixedPermutation,
    /// Deterministic gradient descent on the empirical risk. Used for the
    /// lower-bound construction, whose proof follows full-batch dynamics.
    FullBatch,
}

/// Source of the sampled indices `i_t`.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum IndexStream {
    WithReplacement { rng: Rng, n: usize },
    Permutation { order: Vec<usize>, pos: usize },
    FullBatch,
}

impl IndexStream {
    pub fn new(scheme: Scheme, n: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, streams::INDEX);
        match scheme {
            Scheme::WithReplacement => IndexStream::WithReplacement { rng, n },
            Scheme::FixedPermutation => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                IndexStream::Permutation { order, pos: 0 }
            }
            Scheme::FullBatch => IndexStream::FullBatch,
        }
    }

    /// Next sampled index; `None` means "use the whole dataset".
    pub fn next_index(&mut self) -> Option<usize> {
        match self {
            IndexStream::WithReplacement { rng, n } => Some(rng.gen_range(0..*n)),
            IndexStream::Permutation { order, pos } => {
                let i = order[*pos];
                *pos = (*pos + 1) % order.len();
                Some(i)
            }
            IndexStream::FullBatch => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schedule: ScheduleSpec,
    pub scheme: Scheme,
    pub steps: u64,
    pub seed: u64,
    #[serde(default)]
    pub swa: bool,
    /// Starting point; zero when absent.
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    /// Evaluate `R_S` at every iterate and keep the best one.
    #[serde(default)]
    pub track_best: bool,
}

impl RunConfig {
    pub fn new(schedule: ScheduleSpec, scheme: Scheme, steps: u64, seed: u64) -> Self {
        RunConfig { schedule, scheme, steps, seed, swa: false, theta0: None, track_best: false }
    }

    pub fn with_swa(mut self, swa: bool) -> Self {
        self.swa = swa;
        self
    }

    pub fn with_theta0(mut self, theta0: Vec<f64>) -> Self {
        self.theta0 = Some(theta0);
        self
    }

    pub fn with_best_tracking(mut self) -> Self {
        self.track_best = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    /// Sampled index (`None` for full-batch steps).
    pub index: Option<usize>,
    pub alpha: f64,
    /// Loss at the pre-step iterate on the sampled example (`R_S` for full batch).
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestIterate {
    pub t: u64,
    pub risk: f64,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub entries: Vec<StepRecord>,
    pub final_theta: Vec<f64>,
    pub swa_theta: Option<Vec<f64>>,
    pub best: Option<BestIterate>,
    pub seed: u64,
    pub scheme: Scheme,
}

/// One SGD trajectory advanced step by step.
pub struct Sgd<'a> {
    obj: &'a Objective,
    data: &'a [Example],
    theta: Vec<f64>,
    swa_sum: Option<Vec<f64>>,
    steps: u64,
}

impl<'a> Sgd<'a> {
    pub fn new(obj: &'a Objective, data: &'a [Example], theta0: Option<&[f64]>, swa: bool) -> Result<Self> {
        ensure!(!data.is_empty(), "dataset is empty");
        for z in data {
            obj.check_example(z)?;
        }
        let theta = match theta0 {
            Some(t) => t.to_vec(),
            None => vec![0.0; obj.param_dim()],
        };
        obj.check_domain(&theta)?;
        let swa_sum = swa.then(|| vec![0.0; theta.len()]);
        Ok(Sgd { obj, data, theta, swa_sum, steps: 0 })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Uniform average of `θ^1 … θ^t` so far.
    pub fn swa_theta(&self) -> Option<Vec<f64>> {
        let sum = self.swa_sum.as_ref()?;
        let k = self.steps.max(1) as f64;
        Some(sum.iter().map(|s| s / k).collect())
    }

    /// Applies one update with step `alpha` on example `index` (or the full
    /// batch). Returns `(loss, ‖d‖)` at the pre-step iterate.
    pub fn step(&mut self, alpha: f64, index: Option<usize>) -> (f64, f64) {
        let (loss, grad) = match index {
            Some(i) => self.obj.eval(&self.theta, &self.data[i]),
            None => self.obj.empirical_risk_and_gradient(&self.theta, self.data),
        };
        math::axpy(-alpha, &grad, &mut self.theta);
        let r = self.obj.domain_radius();
        if r.is_finite() {
            math::project_l2_ball(&mut self.theta, r);
        }
        if let Some(sum) = self.swa_sum.as_mut() {
            math::axpy(1.0, &self.theta, sum);
        }
        self.steps += 1;
        (loss, math::norm2(&grad))
    }
}

pub fn run(obj: &Objective, data: &[Example], cfg: &RunConfig) -> Result<TrajectoryRecord> {
    run_observed(obj, data, cfg, |_, _| {})
}

/// Like [`run`], calling `observer(t, θ^t)` after every step.
pub fn run_observed(
    obj: &Objective,
    data: &[Example],
    cfg: &RunConfig,
    mut observer: impl FnMut(u64, &[f64]),
) -> Result<TrajectoryRecord> {
    cfg.schedule.validate()?;
    let mut sgd = Sgd::new(obj, data, cfg.theta0.as_deref(), cfg.swa)?;
    let mut stream = IndexStream::new(cfg.scheme, data.len(), cfg.seed);
    let mut best = cfg.track_best.then(|| BestIterate {
        t: 0,
        risk: obj.empirical_risk(sgd.theta(), data),
        theta: sgd.theta().to_vec(),
    });
    let mut entries = Vec::with_capacity(cfg.steps as usize);
    for t in 1..=cfg.steps {
        let alpha = cfg.schedule.alpha(t)?;
        let index = stream.next_index();
        let (loss, grad_norm) = sgd.step(alpha, index);
        entries.push(StepRecord { t, index, alpha, loss, grad_norm });
        observer(t, sgd.theta());
        if let Some(b) = best.as_mut() {
            let risk = obj.empirical_risk(sgd.theta(), data);
            if risk < b.risk {
                *b = BestIterate { t, risk, theta: sgd.theta().to_vec() };
            }
        }
    }
    Ok(TrajectoryRecord {
        entries,
        swa_theta: sgd.swa_theta(),
        final_theta: sgd.theta,
        best,
        seed: cfg.seed,
        scheme: cfg.scheme,
    })
}

/// Early-stopping horizon `T* = D / (α √(Lη + 2L²/n))` minimizing the
/// fixed-step generalization-plus-optimization trade-off.
pub fn tstar(d: f64, alpha: f64, l: f64, eta: f64, n: u64) -> Result<f64> {
    ensure!(d > 0.0 && alpha > 0.0 && l > 0.0 && n > 0, "tstar needs positive D, alpha, L, n");
    ensure!(eta >= 0.0, "eta must be >= 0");
    let denom = alpha * math::sqrt(l * eta + 2.0 * l * l / n as f64);
    ensure!(denom > 0.0, "zero denominator in tstar");
    Ok(d / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> Objective {
        Objective::scalar_quadratic(0.0, 10.0, 5.0).unwrap()
    }

    #[test]
    fn two_step_hand_recursion() {
        let data = vec![vec![1.0]];
        let cfg = RunConfig::new(ScheduleSpec::fixed(0.5), Scheme::WithReplacement, 2, 1);
        let mut seen = Vec::new();
        run_observed(&quad(), &data, &cfg, |_, th| seen.push(th[0])).unwrap();
        assert_eq!(seen, vec![0.5, 0.75]);
    }

    #[test]
    fn zero_step_size_stays_put() {
        let data = vec![vec![1.0], vec![-2.0]];
        let cfg = RunConfig::new(ScheduleSpec::fixed(0.0), Scheme::WithReplacement, 50, 3).with_theta0(vec![0.3]);
        assert_eq!(run(&quad(), &data, &cfg).unwrap().final_theta, vec![0.3]);
    }

    #[test]
    fn permutation_on_two_points() {
        let data = vec![vec![1.0], vec![-2.0]];
        let mut streams = alloc::collections::BTreeSet::new();
        for seed in 0..32 {
            let cfg = RunConfig::new(ScheduleSpec::fixed(0.1), Scheme::FixedPermutation, 6, seed);
            let rec = run(&quad(), &data, &cfg).unwrap();
            let idx: Vec<usize> = rec.entries.iter().map(|e| e.index.unwrap()).collect();
            assert_eq!(idx[..2], idx[2..4]);
            streams.insert(idx);
        }
        assert_eq!(streams.len(), 2);
    }

    #[test]
    fn empty_dataset_rejected() {
        let cfg = RunConfig::new(ScheduleSpec::fixed(0.1), Scheme::WithReplacement, 3, 0);
        assert!(run(&quad(), &[], &cfg).is_err());
    }

    #[test]
    fn projection_keeps_iterates_in_ball() {
        let obj = Objective::scalar_quadratic(0.1, 1.0, 5.0).unwrap();
        let data = vec![vec![5.0], vec![-5.0]];
        let cfg = RunConfig::new(ScheduleSpec::fixed(0.9), Scheme::WithReplacement, 200, 9);
        run_observed(&obj, &data, &cfg, |_, th| assert!(th[0].abs() <= 1.0)).unwrap();
    }

    #[test]
    fn tstar_worked_value() {
        let t = tstar(1.0, 0.01, 1.0, 0.1, 100).unwrap();
        assert!((t - 1.0 / (0.01 * 0.12_f64.sqrt())).abs() < 1e-9);
        assert!((t - 288.675_134_594_812_9).abs() < 1e-6);
        let t2 = tstar(1.0, 0.02, 1.0, 0.1, 100).unwrap();
        assert!((t2 - t / 2.0).abs() < 1e-9);
        assert!(tstar(1.0, 0.0, 1.0, 0.1, 100).is_err());
    }
}
