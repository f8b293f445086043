#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risklab::augment::{AugmentedMdp, AugmentedPolicy};
use risklab::mdp::History;

/// A fixed, randomly drawn history-dependent stochastic policy: the action
/// law is a pseudo-random function of `(seed, history)`. Roughly a third of
/// histories get a deterministic action.
pub fn random_history_policy(seed: u64, n_actions: usize) -> impl Fn(&History) -> Vec<f64> + Sync {
    move |h: &History| {
        let mut hasher = DefaultHasher::new();
        (seed, h).hash(&mut hasher);
        let mut rng = ChaCha8Rng::seed_from_u64(hasher.finish());
        if rng.gen_bool(1.0 / 3.0) {
            let mut p = vec![0.0; n_actions];
            p[rng.gen_range(0..n_actions)] = 1.0;
            return p;
        }
        let w: Vec<f64> = (0..n_actions).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    }
}

/// Random stochastic augmented policy shaped for `aug`.
pub fn random_augmented_policy(aug: &AugmentedMdp, seed: u64) -> AugmentedPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = AugmentedPolicy::uniform_for(aug);
    for row in policy.probs.iter_mut().flatten().flatten() {
        let w: Vec<f64> = row.iter().map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        for (p, x) in row.iter_mut().zip(w) {
            *p = x / total;
        }
    }
    policy
}
