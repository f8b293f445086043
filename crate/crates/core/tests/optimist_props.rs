mod common;

use common::{random_augmented_policy, random_history_policy};
use risklab::augment::{build_augmented, AugmentedPolicy};
use risklab::envs::make_test_mdps;
use risklab::mdp::{rollout_stream, TabularMdp};
use risklab::optimist::{
    confidence_widths, empirical_model, expected_width_sum, optimistic_model, within_widths,
    CountsModel, EmpiricalModel, Widths,
};
use risklab::planner::evaluate_policy_distribution;
use risklab::riskdist::{phi_quantile, WeightingFunction};

const DELTA: f64 = 0.1;

fn counts_after(truth: &TabularMdp, episodes: u64, seed: u64) -> CountsModel {
    let pi = random_history_policy(seed, truth.n_actions());
    let mut counts = CountsModel::new(truth);
    for k in 0..episodes {
        counts
            .record(&rollout_stream(truth, &pi, seed, k).unwrap())
            .unwrap();
    }
    counts
}

/// `policy` with an extra trailing state appended (its rows are uniform).
fn with_sink(policy: &AugmentedPolicy) -> AugmentedPolicy {
    let mut out = policy.clone();
    for per_s in &mut out.probs {
        let n_a = per_s[0][0].len();
        let uniform = vec![1.0 / n_a as f64; n_a];
        per_s.push(vec![uniform; per_s[0].len()]);
    }
    out
}

#[test]
fn optimistic_returns_dominate_empirical_returns() {
    for m in make_test_mdps() {
        for seed in 0..5 {
            let counts = counts_after(&m.mdp, 3 + seed, seed);
            let empirical = empirical_model(&counts);
            let widths = confidence_widths(&counts, 50, DELTA).unwrap().scaled(0.2);
            let optimistic = optimistic_model(&empirical, &widths).unwrap();
            let emp_aug = build_augmented(&empirical.mdp, m.mdp.eta()).unwrap();
            let opt_aug = build_augmented(&optimistic.mdp, m.mdp.eta()).unwrap();
            let policy = random_augmented_policy(&emp_aug, seed + 100);
            let lo = evaluate_policy_distribution(&emp_aug, &policy).unwrap();
            let hi = evaluate_policy_distribution(&opt_aug, &with_sink(&policy)).unwrap();
            for &x in lo.grid().iter().chain(hi.grid()) {
                assert!(
                    hi.cdf(x) <= lo.cdf(x) + 1e-12,
                    "{} seed {seed} at {x}",
                    m.name
                );
            }
        }
    }
}

#[test]
fn zero_widths_around_the_truth_give_equality() {
    for m in make_test_mdps() {
        let exact = EmpiricalModel {
            mdp: m.mdp.clone(),
            visited: vec![vec![true; m.mdp.n_actions()]; m.mdp.n_states()],
        };
        let widths = Widths::constant(m.mdp.n_states(), m.mdp.n_actions(), 0.0);
        let optimistic = optimistic_model(&exact, &widths).unwrap();
        let aug = build_augmented(&m.mdp, m.mdp.eta()).unwrap();
        let opt_aug = build_augmented(&optimistic.mdp, m.mdp.eta()).unwrap();
        let g = WeightingFunction::cvar(0.3).unwrap();
        for seed in 0..5 {
            let policy = random_augmented_policy(&aug, seed);
            let truth = phi_quantile(&evaluate_policy_distribution(&aug, &policy).unwrap(), &g);
            let hat = phi_quantile(
                &evaluate_policy_distribution(&opt_aug, &with_sink(&policy)).unwrap(),
                &g,
            );
            assert!((truth - hat).abs() < 1e-12, "{}", m.name);
        }
    }
}

#[test]
fn on_the_event_the_model_is_optimistic_and_sandwiched() {
    let mut checked = 0;
    for m in make_test_mdps() {
        let aug = build_augmented(&m.mdp, m.mdp.eta()).unwrap();
        let n_s = m.mdp.n_states() as f64;
        let horizon = m.mdp.horizon() as f64;
        for seed in 0..10 {
            let counts = counts_after(&m.mdp, 40, seed);
            let empirical = empirical_model(&counts);
            let widths = confidence_widths(&counts, 40, DELTA).unwrap();
            if !within_widths(&m.mdp, &empirical, &widths) {
                continue;
            }
            checked += 1;
            let optimistic = optimistic_model(&empirical, &widths).unwrap();
            let opt_aug = build_augmented(&optimistic.mdp, m.mdp.eta()).unwrap();
            for alpha in [0.2, 0.5, 1.0] {
                let g = WeightingFunction::cvar(alpha).unwrap();
                let policy = random_augmented_policy(&aug, seed * 7 + 1);
                let truth = phi_quantile(&evaluate_policy_distribution(&aug, &policy).unwrap(), &g);
                let hat = phi_quantile(
                    &evaluate_policy_distribution(&opt_aug, &with_sink(&policy)).unwrap(),
                    &g,
                );
                assert!(
                    hat >= truth - 1e-9,
                    "{} seed {seed}: {hat} < {truth}",
                    m.name
                );
                let bound = 2.0
                    * horizon
                    * g.lipschitz()
                    * n_s.sqrt()
                    * expected_width_sum(&aug, &policy, &widths).unwrap();
                assert!((hat - truth).abs() <= bound + 1e-9);
            }
        }
    }
    assert!(checked > 0, "the width event never held");
}

#[test]
fn widths_cover_the_truth_at_the_promised_rate() {
    const REPS: u64 = 300;
    for m in make_test_mdps() {
        let covered = (0..REPS)
            .filter(|&rep| {
                let counts = counts_after(&m.mdp, 30, 1000 + rep);
                let empirical = empirical_model(&counts);
                let widths = confidence_widths(&counts, 30, DELTA).unwrap();
                within_widths(&m.mdp, &empirical, &widths)
            })
            .count();
        let rate = covered as f64 / REPS as f64;
        assert!(rate >= 1.0 - DELTA, "{}: coverage {rate}", m.name);
    }
}

#[test]
fn counts_are_order_free_and_additive() {
    let m = &make_test_mdps()[4];
    let pi = random_history_policy(1, m.mdp.n_actions());
    let eps: Vec<_> = (0..6)
        .map(|k| rollout_stream(&m.mdp, &pi, 5, k).unwrap())
        .collect();
    let mut forward = CountsModel::new(&m.mdp);
    let mut backward = CountsModel::new(&m.mdp);
    for e in &eps {
        forward.record(e).unwrap();
    }
    for e in eps.iter().rev() {
        backward.record(e).unwrap();
    }
    assert_eq!(forward, backward);
    assert_eq!(forward.total_visits(), 6 * m.mdp.horizon() as u64);
}
