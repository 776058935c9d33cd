//! Randomized invariants of the bound calculator, the smoothness checks and
//! the coupled engine.

use proptest::prelude::*;
use stablab_core::bounds;
use stablab_core::engine::{self, RunConfig, Scheme};
use stablab_core::objective::ConstantsOverride;
use stablab_core::smoothness::{self, PairMode, PairSampler};
use stablab_core::stability::{self, Experiment};
use stablab_core::{ExampleDistribution, Objective, ScheduleSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn swa_bound_is_half_the_convex_bound(
        l in 0.0..10.0_f64, eta in 0.0..5.0_f64, n in 1.0..1e6_f64,
        alphas in prop::collection::vec(0.0..1.0_f64, 1..40),
    ) {
        let convex = bounds::ub_convex(l, eta, n, &alphas).unwrap();
        let swa = bounds::ub_swa(l, eta, n, &alphas).unwrap();
        prop_assert!((swa - convex / 2.0).abs() <= 1e-12 * convex.max(1.0));
    }

    #[test]
    fn convex_bound_is_monotone(
        l in 0.1..10.0_f64, eta in 0.0..5.0_f64, n in 1.0..1e5_f64, alpha in 1e-4..1.0_f64,
        t in 1.0..1e4_f64, dt in 1.0..1e3_f64,
    ) {
        let at = |l: f64, eta: f64, n: f64, t: f64| bounds::ub_convex_sum(l, eta, n, alpha * t).unwrap();
        let base = at(l, eta, n, t);
        prop_assert!(at(l, eta, n, t + dt) >= base);
        prop_assert!(at(l, eta + 0.1, n, t) >= base);
        prop_assert!(at(l, eta, n * 2.0, t) <= base);
    }

    #[test]
    fn tradeoff_is_smallest_at_tstar(
        l in 0.1..5.0_f64, eta in 0.0..2.0_f64, n in 1_u64..10_000, d in 0.1..10.0_f64,
        alpha in 1e-4..0.1_f64, ratio in 0.05..20.0_f64,
    ) {
        let t_star = engine::tstar(d, alpha, l, eta, n).unwrap();
        let value = |t: f64| bounds::tradeoff_fixed(l, eta, n as f64, d, alpha, t).unwrap().total;
        let best = value(t_star);
        prop_assert!(best <= value(t_star * ratio) + 1e-9 * best);
        let closed = bounds::early_stopping_value(l, eta, n as f64, d, alpha).unwrap();
        prop_assert!((best - closed).abs() <= 1e-9 * closed.max(1.0));
    }

    #[test]
    fn lower_bound_is_below_the_upper_bound_shape(
        eta in 0.0..2.0_f64, l in 0.1..5.0_f64, alpha in 1e-3..0.5_f64, t in 1.0..1e4_f64, n in 1.0..1e4_f64,
    ) {
        // ηα√T + LαT/n ≤ (η + 2L/n)αT whenever T ≥ 1
        let lb = bounds::lb_uas(eta, l, alpha, t, n, Default::default()).unwrap();
        let shape = (eta + 2.0 * l / n) * alpha * t;
        prop_assert!(lb <= shape + 1e-12 * shape.max(1.0));
    }

    #[test]
    fn eta_hat_never_decreases_with_more_pairs(eps in 0.0..0.3_f64, seed in any::<u64>(), n in 2_u64..400) {
        let obj = Objective::scalar_quadratic(eps, 2.0, 1.0).unwrap();
        let small = smoothness::estimate_constants(&obj, n, seed).unwrap();
        let large = smoothness::estimate_constants(&obj, 2 * n, seed).unwrap();
        prop_assert!(large.eta_hat >= small.eta_hat);
        prop_assert!(large.eta_hat <= obj.constants().eta + 1e-9);
    }

    #[test]
    fn understated_eta_violations_replay(eps in 0.05..0.3_f64, seed in any::<u64>()) {
        let obj = Objective::scalar_quadratic(eps, 2.0, 1.0).unwrap();
        let sampler = PairSampler::new(&obj, seed).with_mode(PairMode::KinkStraddling);
        let report = smoothness::check_descent(&sampler, 200, 1.0, 0.0).unwrap();
        prop_assert!(!report.passed());
        for v in &report.violations {
            prop_assert_eq!(report.replay(&obj, v), v.slack);
            prop_assert!(v.slack > smoothness::TOLERANCE);
        }
    }

    #[test]
    fn coupled_runs_respect_the_step_certificate(
        eps in 0.0..0.2_f64, seed in any::<u64>(), n in 2_usize..30, alpha in 1e-3..0.5_f64, steps in 1_u64..300,
        permutation in any::<bool>(),
    ) {
        let obj = Objective::scalar_quadratic(eps, 2.0, 1.0).unwrap();
        let dist = ExampleDistribution::UniformBall { radius: 1.0 };
        let scheme = if permutation { Scheme::FixedPermutation } else { Scheme::WithReplacement };
        let exp = Experiment::new(n, ScheduleSpec::fixed(alpha), scheme, steps);
        let rep = stability::run_replicate(&obj, &dist, &exp, seed).unwrap();
        prop_assert_eq!(rep.certificate_violations, Some(0));
        prop_assert_eq!(rep.delta[0], 0.0);
        prop_assert!((1..=n).contains(&rep.differing_index));
    }

    #[test]
    fn identical_datasets_never_diverge(seed in any::<u64>(), n in 1_usize..20, steps in 1_u64..200) {
        let obj = Objective::scalar_quadratic(0.1, 2.0, 1.0).unwrap();
        let dist = ExampleDistribution::UniformBall { radius: 1.0 };
        let exp = Experiment::new(n, ScheduleSpec::fixed(0.1), Scheme::WithReplacement, steps).with_identical(true);
        let rep = stability::run_replicate(&obj, &dist, &exp, seed).unwrap();
        prop_assert!(rep.delta.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn iterates_stay_in_the_domain(seed in any::<u64>(), alpha in 0.1..3.0_f64, radius in 0.2..2.0_f64) {
        let obj = Objective::scalar_quadratic(0.1, radius, 5.0).unwrap();
        let data: Vec<Vec<f64>> = vec![vec![5.0], vec![-5.0], vec![4.0]];
        let rec = engine::run(&obj, &data, &RunConfig::new(ScheduleSpec::fixed(alpha), Scheme::WithReplacement, 50, seed)).unwrap();
        prop_assert!(rec.final_theta[0].abs() <= radius + 1e-12);
    }
}

#[test]
fn declared_constants_are_used_and_flagged() {
    let obj = Objective::scalar_quadratic(0.1, 2.0, 1.0)
        .unwrap()
        .with_overrides(&ConstantsOverride { eta: Some(0.0), ..Default::default() })
        .unwrap();
    assert_eq!(obj.constants().eta, 0.0);
    let cert = smoothness::estimate_constants(&obj, 1000, 0).unwrap();
    assert!(!cert.consistent());
}
