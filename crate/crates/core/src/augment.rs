//! Cumulative-reward augmentation.
//!
//! The augmented model tracks `(s, y)` where `y` is the reward collected so
//! far, stored as a lattice index. All reward is paid at the end of the
//! episode as the final `y`, so any quantile-weighted objective of the
//! original return becomes an objective of the terminal state distribution
//! and is optimized by policies of `(t, s, y)` alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{checked_probs, for_each_history, History, HistoryPolicy, TabularMdp, ORACLE_CAP};

const LATTICE_TOL: f64 = 1e-9;

/// `φ(r) = η·⌈r/η⌉` as a lattice index.
pub fn round_up_index(reward: f64, eta: f64) -> u32 {
    ((reward / eta) - LATTICE_TOL).ceil().max(0.0) as u32
}

/// Replaces every reward law by its push-forward under `φ(r) = η·⌈r/η⌉`.
pub fn discretize_rewards(mdp: &TabularMdp, eta: f64) -> Result<TabularMdp> {
    if !(eta > 0.0) {
        return Err(Error::domain(format!("eta = {eta} must be positive")));
    }
    let top = crate::mdp::steps_per_unit(eta)?;
    let n_s = mdp.n_states();
    let n_a = mdp.n_actions();
    let mut rewards = vec![vec![vec![0.0; top + 1]; n_a]; n_s];
    for (s, row) in rewards.iter_mut().enumerate() {
        for (a, hist) in row.iter_mut().enumerate() {
            for (i, p) in mdp.reward_atoms(s, a) {
                let j = round_up_index(i as f64 * mdp.eta(), eta) as usize;
                hist[j.min(top)] += p;
            }
        }
    }
    let trans = (0..n_s)
        .map(|s| (0..n_a).map(|a| mdp.trans(s, a).to_vec()).collect())
        .collect();
    TabularMdp::new(mdp.horizon(), eta, mdp.init().to_vec(), trans, rewards)
}

/// The MDP over `(s, y)` with `y ∈ {0, η, …, T}` and a terminal payoff of
/// `y`. Transitions are derived on demand from the (discretized) base model.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMdp {
    base: TabularMdp,
    /// `kernel[s·|A| + a]`: `(s', reward index, probability)` with positive
    /// probability.
    kernel: Vec<Vec<(usize, usize, f64)>>,
}

/// Builds the augmented model on the `eta` lattice, discretizing rewards
/// first when `eta` differs from the model's own lattice.
pub fn build_augmented(mdp: &TabularMdp, eta: f64) -> Result<AugmentedMdp> {
    if !(eta > 0.0) {
        return Err(Error::domain(format!("eta = {eta} must be positive")));
    }
    let base = if (eta - mdp.eta()).abs() <= 1e-12 {
        mdp.clone()
    } else {
        discretize_rewards(mdp, eta)?
    };
    let mut kernel = Vec::with_capacity(base.n_states() * base.n_actions());
    for s in 0..base.n_states() {
        for a in 0..base.n_actions() {
            let row: Vec<_> = base
                .reward_atoms(s, a)
                .flat_map(|(r, pr)| {
                    base.successors(s, a)
                        .map(move |(next, pn)| (next, r, pr * pn))
                })
                .collect();
            kernel.push(row);
        }
    }
    Ok(AugmentedMdp { base, kernel })
}

impl AugmentedMdp {
    /// The discretized original model.
    pub fn base(&self) -> &TabularMdp {
        &self.base
    }

    pub fn eta(&self) -> f64 {
        self.base.eta()
    }

    pub fn horizon(&self) -> usize {
        self.base.horizon()
    }

    pub fn n_states(&self) -> usize {
        self.base.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.base.n_actions()
    }

    /// Number of cumulative-reward levels, `T/η + 1`.
    pub fn y_levels(&self) -> usize {
        self.base.return_levels()
    }

    /// `|S| · (T/η + 1)`.
    pub fn state_count(&self) -> usize {
        self.n_states() * self.y_levels()
    }

    /// Initial augmented law: `D(s)` at `y = 0`.
    pub fn initial(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        crate::mdp::nonzero(self.base.init())
    }

    /// `P̃((s', y') | (s, y), a) = P(s'|s,a) · P_R(y' − y)`, as
    /// `(s', y', p)` triples with `p > 0`.
    pub fn successors(
        &self,
        s: usize,
        y: usize,
        a: usize,
    ) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.kernel(s, a)
            .iter()
            .map(move |&(next, r, p)| (next, y + r, p))
    }

    /// `(s', reward index, probability)` triples of `(s, a)`.
    pub fn kernel(&self, s: usize, a: usize) -> &[(usize, usize, f64)] {
        &self.kernel[s * self.base.n_actions() + a]
    }

    /// Terminal payoff of `(s, y)`.
    pub fn payoff(&self, y: usize) -> f64 {
        y as f64 * self.eta()
    }

    /// `reachable[t][s][y]`: whether `(s, y)` can occur at step `t` under
    /// some policy.
    pub fn reachable(&self) -> Vec<Vec<Vec<bool>>> {
        let (horizon, n_s, n_y) = (self.horizon(), self.n_states(), self.y_levels());
        let mut reach = vec![vec![vec![false; n_y]; n_s]; horizon + 1];
        for (s, _) in self.initial() {
            reach[0][s][0] = true;
        }
        for t in 0..horizon {
            for s in 0..n_s {
                for y in 0..n_y {
                    if !reach[t][s][y] {
                        continue;
                    }
                    for a in 0..self.n_actions() {
                        for (next, y2, _) in self.successors(s, y, a).collect::<Vec<_>>() {
                            reach[t + 1][next][y2] = true;
                        }
                    }
                }
            }
        }
        reach
    }
}

/// Time-indexed action distributions over augmented states:
/// `probs[t][s][y][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPolicy {
    pub eta: f64,
    pub probs: Vec<Vec<Vec<Vec<f64>>>>,
}

impl AugmentedPolicy {
    pub fn uniform(
        eta: f64,
        horizon: usize,
        n_states: usize,
        y_levels: usize,
        n_actions: usize,
    ) -> Self {
        let row = vec![1.0 / n_actions as f64; n_actions];
        AugmentedPolicy {
            eta,
            probs: vec![vec![vec![row; y_levels]; n_states]; horizon],
        }
    }

    /// Uniform policy shaped for `aug`.
    pub fn uniform_for(aug: &AugmentedMdp) -> Self {
        Self::uniform(
            aug.eta(),
            aug.horizon(),
            aug.n_states(),
            aug.y_levels(),
            aug.n_actions(),
        )
    }

    /// Deterministic policy from `actions[t][s][y]`.
    pub fn deterministic(eta: f64, actions: &[Vec<Vec<usize>>], n_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|per_s| {
                per_s
                    .iter()
                    .map(|per_y| {
                        per_y
                            .iter()
                            .map(|&a| {
                                let mut p = vec![0.0; n_actions];
                                p[a] = 1.0;
                                p
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        AugmentedPolicy { eta, probs }
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    pub fn n_states(&self) -> usize {
        self.probs.first().map_or(0, |p| p.len())
    }

    pub fn y_levels(&self) -> usize {
        self.probs
            .first()
            .and_then(|p| p.first())
            .map_or(0, |p| p.len())
    }

    pub fn probs(&self, t: usize, s: usize, y: usize) -> &[f64] {
        &self.probs[t][s][y]
    }

    /// Most likely action at a cell, lowest index on ties.
    pub fn mode(&self, t: usize, s: usize, y: usize) -> usize {
        let p = self.probs(t, s, y);
        let mut best = 0;
        for (a, &x) in p.iter().enumerate() {
            if x > p[best] {
                best = a;
            }
        }
        best
    }

    /// Drops trailing states (e.g. an auxiliary absorbing state) so the
    /// policy can run on a model with `n_states` states.
    pub fn truncate_states(&self, n_states: usize) -> Self {
        AugmentedPolicy {
            eta: self.eta,
            probs: self
                .probs
                .iter()
                .map(|per_s| per_s[..n_states].to_vec())
                .collect(),
        }
    }

    /// Checks the table shape against `aug` and every row for validity.
    pub fn validate_for(&self, aug: &AugmentedMdp) -> Result<()> {
        if self.horizon() != aug.horizon()
            || self.n_states() != aug.n_states()
            || self.y_levels() != aug.y_levels()
        {
            return Err(Error::ShapeMismatch(format!(
                "policy is {}x{}x{}, model needs {}x{}x{}",
                self.horizon(),
                self.n_states(),
                self.y_levels(),
                aug.horizon(),
                aug.n_states(),
                aug.y_levels()
            )));
        }
        for per_s in &self.probs {
            for per_y in per_s {
                for row in per_y {
                    checked_probs(row.clone(), aug.n_actions())?;
                }
            }
        }
        Ok(())
    }
}

/// An augmented policy run on an un-augmented model: it rounds each observed
/// reward up to the `η` lattice, accumulates `y`, and looks up `(t, s, y)`.
#[derive(Debug, Clone, Copy)]
pub struct AdaptedPolicy<'a> {
    policy: &'a AugmentedPolicy,
    eta: f64,
}

pub fn adapt_policy(policy: &AugmentedPolicy, eta: f64) -> Result<AdaptedPolicy<'_>> {
    if !(eta > 0.0) {
        return Err(Error::domain(format!("eta = {eta} must be positive")));
    }
    if (policy.eta - eta).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "policy lattice {} differs from requested eta {eta}",
            policy.eta
        )));
    }
    Ok(AdaptedPolicy { policy, eta })
}

impl AdaptedPolicy<'_> {
    /// Discretized cumulative reward index `y_t` tracked along `history`.
    pub fn y_index(&self, history: &History, history_eta: f64) -> Result<usize> {
        let mut y = 0usize;
        for &r in &history.rewards {
            let value = r as f64 * history_eta;
            if !(-LATTICE_TOL..=1.0 + LATTICE_TOL).contains(&value) {
                return Err(Error::contract(format!(
                    "observed reward {value} outside [0, 1]"
                )));
            }
            y += round_up_index(value, self.eta) as usize;
        }
        Ok(y)
    }
}

impl HistoryPolicy for AdaptedPolicy<'_> {
    fn action_probs(&self, history: &History, eta: f64) -> Result<Vec<f64>> {
        let y = self.y_index(history, eta)?;
        let t = history.t();
        let s = history.current_state();
        self.policy
            .probs
            .get(t)
            .and_then(|p| p.get(s))
            .and_then(|p| p.get(y))
            .cloned()
            .ok_or_else(|| Error::contract(format!("no policy entry for (t={t}, s={s}, y={y})")))
    }
}

/// Collapses a history-dependent policy onto `(t, s, y)` cells: each cell's
/// action law is the conditional expectation of the policy over histories
/// ending in state `s` with cumulative reward exactly `y`. Cells that are
/// never reached get the uniform law.
pub fn build_tilde_policy(mdp: &TabularMdp, policy: &dyn HistoryPolicy) -> Result<AugmentedPolicy> {
    build_tilde_policy_capped(mdp, policy, ORACLE_CAP)
}

pub fn build_tilde_policy_capped(
    mdp: &TabularMdp,
    policy: &dyn HistoryPolicy,
    cap: u64,
) -> Result<AugmentedPolicy> {
    let (horizon, n_s, n_y, n_a) = (
        mdp.horizon(),
        mdp.n_states(),
        mdp.return_levels(),
        mdp.n_actions(),
    );
    let mut weighted = vec![vec![vec![vec![0.0; n_a]; n_y]; n_s]; horizon];
    let mut mass = vec![vec![vec![0.0; n_y]; n_s]; horizon];
    let mut failure = None;
    let mut leaves = 0;
    for_each_history(mdp, policy, cap, &mut leaves, &mut |h, p, t| {
        if t == horizon || failure.is_some() {
            return;
        }
        let (s, y) = (h.current_state(), h.cumulative_index() as usize);
        match policy.action_probs(h, mdp.eta()) {
            Ok(probs) => {
                mass[t][s][y] += p;
                for (acc, pa) in weighted[t][s][y].iter_mut().zip(probs) {
                    *acc += p * pa;
                }
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let uniform = vec![1.0 / n_a as f64; n_a];
    for t in 0..horizon {
        for s in 0..n_s {
            for y in 0..n_y {
                let m = mass[t][s][y];
                let row = &mut weighted[t][s][y];
                if m > 0.0 {
                    row.iter_mut().for_each(|x| *x /= m);
                } else {
                    row.clone_from(&uniform);
                }
            }
        }
    }
    Ok(AugmentedPolicy {
        eta: mdp.eta(),
        probs: weighted,
    })
}
