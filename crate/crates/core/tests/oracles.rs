//! Independent oracles: closed forms worked by hand, dense grid scans and
//! finite differences, checked against the library's answers.

use stablab_core::bounds::{self, BoundId, Inputs};
use stablab_core::engine::{self, RunConfig, Scheme};
use stablab_core::objective::make_hard_instance;
use stablab_core::smoothness;
use stablab_core::stability;
use stablab_core::{AdversarialConfig, Family, HardInstanceParams, Objective, PNorm, ScheduleSpec};

fn hard(t: usize) -> HardInstanceParams {
    HardInstanceParams { d: t, horizon: t, v: 0.0, k: 1.0, eta: 1.0 }
}

fn hard_delta(t: u64) -> f64 {
    let (obj, pair) = make_hard_instance(hard(t as usize), 2).unwrap();
    let run = stability::coupled_run(&obj, &pair, &RunConfig::new(ScheduleSpec::fixed(0.1), Scheme::FullBatch, t, 0)).unwrap();
    run.delta[t as usize]
}

#[test]
fn hard_instance_matches_hand_worked_values() {
    // n = 2, K = 1, η = 1, α = 0.1: θ^T is Tα/2 on T coordinates, less α/2 on
    // the first T − 1, and the run on S' stays at the origin.
    // T = 2:   (0.05, 0.1)              → √0.0125
    // T = 10:  nine of 0.45, one 0.5    → √2.0725
    // T = 100: 99 of 4.95, one 5        → √2450.7475
    for (t, expected) in [(2, 0.0125_f64.sqrt()), (10, 2.0725_f64.sqrt()), (100, 2450.7475_f64.sqrt())] {
        let measured = hard_delta(t);
        assert!((measured - expected).abs() <= 1e-10 * expected, "T = {t}: {measured} vs {expected}");
    }
}

#[test]
fn hard_instance_grows_like_sqrt_t() {
    for t in [4_u64, 16, 64] {
        let witness = 1.0 * 0.1 * ((t - 1) as f64).sqrt() * 0.5;
        assert!(hard_delta(t) >= witness);
    }
}

/// `max (|h'(θ₁) − h'(θ₂)| − β|θ₁ − θ₂|)₊` over a grid, h' by central differences.
fn grid_eta(obj: &Objective, beta: f64, z: f64) -> f64 {
    const GRID: usize = 1201;
    const H: f64 = 1e-6;
    let r = obj.domain_radius();
    let pts: Vec<(f64, f64)> = (0..GRID)
        .map(|k| -r + (k as f64 + 0.5) * 2.0 * r / GRID as f64)
        .filter(|t| (t - z).abs() > 10.0 * H)
        .map(|t| (t, (obj.value(&[t + H], &[z]).unwrap() - obj.value(&[t - H], &[z]).unwrap()) / (2.0 * H)))
        .collect();
    let mut best = 0.0_f64;
    for (i, (t1, g1)) in pts.iter().enumerate() {
        for (t2, g2) in &pts[i + 1..] {
            best = best.max((g1 - g2).abs() - beta * (t1 - t2).abs());
        }
    }
    best
}

#[test]
fn eta_of_the_scalar_shift_is_twice_epsilon() {
    for eps in [0.05, 0.1, 0.3] {
        let obj = Objective::scalar_quadratic(eps, 2.0, 1.0).unwrap();
        let c = obj.constants();
        assert!((c.eta - 2.0 * eps).abs() < 1e-15);
        let oracle = grid_eta(&obj, c.beta, 0.25);
        assert!((oracle - 2.0 * eps).abs() < 1e-3 * eps, "eps {eps}: grid {oracle}");
        let est = smoothness::estimate_constants(&obj, 20_000, 9).unwrap();
        assert!((est.eta_hat - c.eta).abs() <= 0.05 * c.eta, "eps {eps}: eta-hat {}", est.eta_hat);
        assert!(est.eta_hat <= c.eta + 1e-9);
    }
}

#[test]
fn danskin_subgradient_matches_finite_differences() {
    const H: f64 = 1e-6;
    for p in [PNorm::TWO, PNorm::INF] {
        let obj = Objective::new(Family::Logistic { dim: 3, feature_radius: 1.0 }, 5.0, Some(AdversarialConfig::new(0.1, p))).unwrap();
        let z = [0.3, -0.5, 0.2, 1.0];
        for theta in [[0.7, 0.2, -1.1], [-0.4, 1.3, 0.9], [2.0, -0.3, 0.05]] {
            let g = obj.subgradient(&theta, &z).unwrap();
            for k in 0..3 {
                let (mut up, mut dn) = (theta, theta);
                up[k] += H;
                dn[k] -= H;
                let fd = (obj.value(&up, &z).unwrap() - obj.value(&dn, &z).unwrap()) / (2.0 * H);
                assert!((fd - g[k]).abs() < 1e-6, "p {:?} coord {k}: {fd} vs {}", p.value(), g[k]);
            }
        }
    }
}

#[test]
fn worked_bound_values() {
    let mut inputs = Inputs::new();
    for (k, v) in [("L", 1.0), ("eta", 0.1), ("n", 100.0), ("alpha", 0.01), ("T", 1000.0)] {
        inputs.insert(k.into(), v);
    }
    assert!((bounds::evaluate(BoundId::UbConvex, &inputs).unwrap().value - 1.2).abs() < 1e-12);
    assert!((bounds::evaluate(BoundId::UbSwa, &inputs).unwrap().value - 0.6).abs() < 1e-12);
    // T* = D / (α√(Lη + 2L²/n)) = 2 / (0.01·√0.12)
    let t_star = engine::tstar(2.0, 0.01, 1.0, 0.1, 100).unwrap();
    assert!((t_star - 577.350_269_189_625_8).abs() < 1e-9);
    // at T* the three T-dependent terms collapse to 2√(Lη + 2L²/n)·D
    let at = bounds::tradeoff_fixed(1.0, 0.1, 100.0, 2.0, 0.01, t_star).unwrap();
    assert!((at.total - (4.0 * 0.12_f64.sqrt() + 0.01)).abs() < 1e-12);
}

#[test]
fn two_step_full_batch_example() {
    // scalar squared loss, S = {0, 1}, S' = {0, −1}, α = 1/2, differing at index 2
    let obj = Objective::scalar_quadratic(0.0, 10.0, 5.0).unwrap();
    let pair = stability::NeighborPair::new(vec![vec![0.0], vec![1.0]], vec![vec![0.0], vec![-1.0]], 2).unwrap();
    let run = stability::coupled_run(&obj, &pair, &RunConfig::new(ScheduleSpec::fixed(0.5), Scheme::FullBatch, 2, 0)).unwrap();
    // full batch: θ ← θ − ½(θ − mean z). S: 0 → 0.25 → 0.375; S': 0 → −0.25 → −0.375.
    assert!((run.delta[1] - 0.5).abs() < 1e-15);
    assert!((run.delta[2] - 0.75).abs() < 1e-15);
}
