mod common;

use common::random_history_policy;
use risklab::augment::{adapt_policy, build_augmented};
use risklab::envs::{make_frozen_lake, make_test_mdps, FrozenLakeSpec};
use risklab::mdp::{exact_return_distribution, rollout_stream, TabularMdp};
use risklab::planner::evaluate_policy_distribution;

fn assert_lattice_law(mdp: &TabularMdp, dist: &risklab::riskdist::DiscreteDistribution) {
    let total: f64 = dist.mass().iter().sum();
    assert!((total - 1.0).abs() < 1e-12, "mass {total}");
    for &z in dist.grid() {
        let k = z / mdp.eta();
        assert!((k - k.round()).abs() < 1e-9, "{z} off the lattice");
        assert!(z >= -1e-12 && z <= mdp.horizon() as f64 + 1e-12);
    }
}

#[test]
fn exact_laws_are_distributions_on_the_lattice() {
    for m in make_test_mdps() {
        for seed in 0..10 {
            let pi = random_history_policy(seed, m.mdp.n_actions());
            let dist = exact_return_distribution(&m.mdp, &pi).unwrap();
            assert_lattice_law(&m.mdp, &dist);
        }
    }
}

#[test]
fn monte_carlo_stays_inside_the_dkw_band() {
    const RUNS: u64 = 100_000;
    let eps = ((2.0f64 / 0.001).ln() / (2.0 * RUNS as f64)).sqrt();
    for m in make_test_mdps() {
        let pi = random_history_policy(11, m.mdp.n_actions());
        let exact = exact_return_distribution(&m.mdp, &pi).unwrap();
        let mut hist = vec![0u64; m.mdp.return_levels()];
        for i in 0..RUNS {
            let ep = rollout_stream(&m.mdp, &pi, 2024, i).unwrap();
            hist[ep.return_index() as usize] += 1;
        }
        let mut seen = 0u64;
        let mut worst = 0.0f64;
        for (k, n) in hist.iter().enumerate() {
            seen += n;
            let x = k as f64 * m.mdp.eta();
            worst = worst.max((seen as f64 / RUNS as f64 - exact.cdf(x)).abs());
        }
        assert!(worst <= eps, "{}: sup gap {worst} > {eps}", m.name);
    }
}

#[test]
fn enumeration_agrees_with_forward_evaluation() {
    for m in make_test_mdps() {
        let aug = build_augmented(&m.mdp, m.mdp.eta()).unwrap();
        for seed in 0..10 {
            let policy = common::random_augmented_policy(&aug, seed);
            let forward = evaluate_policy_distribution(&aug, &policy).unwrap();
            let adapted = adapt_policy(&policy, aug.eta()).unwrap();
            let exact = exact_return_distribution(&m.mdp, &adapted).unwrap();
            assert!(forward.cdf_distance(&exact) <= 1e-10, "{}", m.name);
        }
    }
}

#[test]
fn frozen_lake_enumeration_agrees_with_forward_evaluation() {
    let lake = make_frozen_lake(&FrozenLakeSpec::default()).unwrap();
    let aug = build_augmented(&lake.mdp, lake.mdp.eta()).unwrap();
    for seed in 0..3 {
        let policy = common::random_augmented_policy(&aug, seed);
        let forward = evaluate_policy_distribution(&aug, &policy).unwrap();
        let adapted = adapt_policy(&policy, aug.eta()).unwrap();
        let exact = exact_return_distribution(&lake.mdp, &adapted).unwrap();
        assert_lattice_law(&lake.mdp, &exact);
        assert!(forward.cdf_distance(&exact) <= 1e-10);
    }
}

#[test]
fn rollouts_are_reproducible_per_stream() {
    let m = &make_test_mdps()[4];
    let pi = random_history_policy(3, m.mdp.n_actions());
    let a = rollout_stream(&m.mdp, &pi, 9, 17).unwrap();
    let b = rollout_stream(&m.mdp, &pi, 9, 17).unwrap();
    assert_eq!(a.steps.len(), b.steps.len());
    assert_eq!(a.rewards(), b.rewards());
    assert_eq!(a.final_state, b.final_state);
}
