//! Exact evaluation and planning on the augmented model.
//!
//! CVaR planning uses the reward-maximization form of the Rockafellar
//! representation,
//!
//! ```text
//! CVaR_α(Z) = max_ρ { ρ + E[min(Z − ρ, 0)] / α },
//! ```
//!
//! so for a fixed `ρ` the inner problem is an expected-utility problem with
//! terminal utility `min(y − ρ, 0)`, solved by scalar backward induction on
//! `(t, s, y)`. `ρ` only needs to range over the return lattice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentedMdp, AugmentedPolicy};
use crate::error::{Error, Result};
use crate::riskdist::{phi_quantile, DiscreteDistribution, WeightingFunction};

/// Default budget on the number of deterministic policies scanned by
/// [`plan_bruteforce`].
pub const BRUTEFORCE_CAP: u64 = 1_000_000;

const TIE_TOL: f64 = 1e-12;

/// Exact return law of `policy` on `aug`, by forward propagation of the
/// `(s, y)` occupancy.
pub fn evaluate_policy_distribution(
    aug: &AugmentedMdp,
    policy: &AugmentedPolicy,
) -> Result<DiscreteDistribution> {
    policy.validate_for(aug)?;
    Ok(evaluate_unchecked(aug, policy))
}

fn evaluate_unchecked(aug: &AugmentedMdp, policy: &AugmentedPolicy) -> DiscreteDistribution {
    let (n_s, n_y) = (aug.n_states(), aug.y_levels());
    let mut occ = vec![vec![0.0; n_y]; n_s];
    for (s, p) in aug.initial() {
        occ[s][0] += p;
    }
    for t in 0..aug.horizon() {
        let mut next = vec![vec![0.0; n_y]; n_s];
        for s in 0..n_s {
            for y in 0..n_y {
                let m = occ[s][y];
                if m == 0.0 {
                    continue;
                }
                for (a, &pa) in policy.probs(t, s, y).iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    for (s2, y2, p) in aug.successors(s, y, a) {
                        next[s2][y2] += m * pa * p;
                    }
                }
            }
        }
        occ = next;
    }
    let mut hist = vec![0.0; n_y];
    for row in &occ {
        for (h, m) in hist.iter_mut().zip(row) {
            *h += m;
        }
    }
    DiscreteDistribution::from_lattice(aug.eta(), &hist).expect("occupancy is a distribution")
}

/// Return-to-go laws `Z_t(s, y)` for every augmented cell, as histograms
/// over the return lattice. `Z_T ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTable {
    eta: f64,
    /// `hist[t][s][y][k]` = P(remaining reward = k·η)
    hist: Vec<Vec<Vec<Vec<f64>>>>,
}

impl ReturnTable {
    pub fn distribution(&self, t: usize, s: usize, y: usize) -> DiscreteDistribution {
        DiscreteDistribution::from_lattice(self.eta, &self.hist[t][s][y])
            .expect("return-to-go is a distribution")
    }

    pub fn histogram(&self, t: usize, s: usize, y: usize) -> &[f64] {
        &self.hist[t][s][y]
    }
}

/// Distributional Bellman backup:
/// `F_{Z_t(s,y)}(x) = Σ_a π(a) Σ_{s'} P(s') Σ_r P_R(r) F_{Z_{t+1}(s',y+r)}(x − r)`.
pub fn return_table(aug: &AugmentedMdp, policy: &AugmentedPolicy) -> Result<ReturnTable> {
    policy.validate_for(aug)?;
    let (horizon, n_s, n_y) = (aug.horizon(), aug.n_states(), aug.y_levels());
    let top = aug.base().reward_top();
    let mut hist = vec![vec![vec![vec![0.0; n_y]; n_y]; n_s]; horizon + 1];
    for s in 0..n_s {
        for y in 0..n_y {
            hist[horizon][s][y][0] = 1.0;
        }
    }
    for t in (0..horizon).rev() {
        let (done, rest) = hist.split_at_mut(t + 1);
        let (cur, later) = (&mut done[t], &rest[0]);
        let y_max = (t * top).min(n_y - 1);
        for s in 0..n_s {
            for y in 0..=y_max {
                let out = &mut cur[s][y];
                for (a, &pa) in policy.probs(t, s, y).iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    for (s2, y2, p) in aug.successors(s, y, a) {
                        let r = y2 - y;
                        let w = pa * p;
                        for (k, &q) in later[s2][y2].iter().enumerate() {
                            if q != 0.0 {
                                out[k + r] += w * q;
                            }
                        }
                    }
                }
            }
            // Cells with y above t·top cannot occur; give them Z = 0.
            for y in y_max + 1..n_y {
                cur[s][y][0] = 1.0;
            }
        }
    }
    Ok(ReturnTable {
        eta: aug.eta(),
        hist,
    })
}

/// Return law from the initial augmented distribution, read off a
/// [`ReturnTable`].
pub fn initial_return(aug: &AugmentedMdp, table: &ReturnTable) -> DiscreteDistribution {
    let mut hist = vec![0.0; aug.y_levels()];
    for (s, p) in aug.initial() {
        for (h, q) in hist.iter_mut().zip(table.histogram(0, s, 0)) {
            *h += p * q;
        }
    }
    DiscreteDistribution::from_lattice(aug.eta(), &hist).expect("initial return is a distribution")
}

/// Result of CVaR planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvarPlanResult {
    pub policy: AugmentedPolicy,
    /// Maximizer of `J(ρ)` on the return lattice.
    pub rho_star: f64,
    /// CVaR of the planned policy's exact return law.
    pub value: f64,
    pub alpha: f64,
    pub eta: f64,
    /// `VaR_α` of the planned policy's return, reported next to `rho_star`.
    pub var_alpha: f64,
    /// `J(ρ)` at every lattice point.
    pub objective_by_rho: Vec<f64>,
}

/// Scalar backward induction with terminal utility `utility(y)`. Returns the
/// greedy deterministic policy (lowest action on ties) and the expected
/// utility from the initial law.
fn backward_induction(
    aug: &AugmentedMdp,
    utility: impl Fn(usize) -> f64,
    mut record: Option<&mut Vec<Vec<Vec<usize>>>>,
) -> f64 {
    let (horizon, n_s, n_y, n_a) = (
        aug.horizon(),
        aug.n_states(),
        aug.y_levels(),
        aug.n_actions(),
    );
    let top = aug.base().reward_top();
    let mut value: Vec<Vec<f64>> = vec![(0..n_y).map(&utility).collect(); n_s];
    for t in (0..horizon).rev() {
        let y_max = (t * top).min(n_y - 1);
        let mut cur = vec![vec![0.0; n_y]; n_s];
        for s in 0..n_s {
            for y in 0..=y_max {
                let mut best = f64::NEG_INFINITY;
                let mut best_a = 0;
                for a in 0..n_a {
                    let q: f64 = aug
                        .successors(s, y, a)
                        .map(|(s2, y2, p)| p * value[s2][y2])
                        .sum();
                    if q > best + TIE_TOL {
                        best = q;
                        best_a = a;
                    }
                }
                cur[s][y] = best;
                if let Some(actions) = record.as_deref_mut() {
                    actions[t][s][y] = best_a;
                }
            }
        }
        value = cur;
    }
    aug.initial().map(|(s, p)| p * value[s][0]).sum()
}

fn policy_from_utility(
    aug: &AugmentedMdp,
    utility: impl Fn(usize) -> f64,
) -> (AugmentedPolicy, f64) {
    let mut actions = vec![vec![vec![0usize; aug.y_levels()]; aug.n_states()]; aug.horizon()];
    let v = backward_induction(aug, utility, Some(&mut actions));
    (
        AugmentedPolicy::deterministic(aug.eta(), &actions, aug.n_actions()),
        v,
    )
}

/// CVaR-optimal deterministic augmented policy.
pub fn plan_cvar(aug: &AugmentedMdp, alpha: f64) -> Result<CvarPlanResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha = {alpha} not in (0, 1]")));
    }
    let eta = aug.eta();
    let n_y = aug.y_levels();
    let utility = |rho: usize| move |y: usize| (y as f64 - rho as f64).min(0.0) * eta;
    let objective: Vec<f64> = (0..n_y)
        .into_par_iter()
        .map(|rho| rho as f64 * eta + backward_induction(aug, utility(rho), None) / alpha)
        .collect();
    let mut best = 0;
    for (rho, &j) in objective.iter().enumerate() {
        if j > objective[best] + TIE_TOL {
            best = rho;
        }
    }
    let (policy, _) = policy_from_utility(aug, utility(best));
    let dist = evaluate_unchecked(aug, &policy);
    let g = WeightingFunction::cvar(alpha)?;
    Ok(CvarPlanResult {
        value: phi_quantile(&dist, &g),
        var_alpha: dist.quantile(alpha)?,
        rho_star: best as f64 * eta,
        alpha,
        eta,
        policy,
        objective_by_rho: objective,
    })
}

/// Expected-return-optimal deterministic augmented policy and its value.
pub fn plan_expectation(aug: &AugmentedMdp) -> (AugmentedPolicy, f64) {
    let eta = aug.eta();
    policy_from_utility(aug, |y| y as f64 * eta)
}

/// Exhaustive search over deterministic augmented policies, with the
/// default [`BRUTEFORCE_CAP`].
pub fn plan_bruteforce(
    aug: &AugmentedMdp,
    g: &WeightingFunction,
) -> Result<(AugmentedPolicy, f64)> {
    plan_bruteforce_capped(aug, g, BRUTEFORCE_CAP)
}

/// Enumerates every deterministic augmented policy, distinguishing only
/// actions at cells the policy itself can reach, and returns the maximizer
/// of `Φ`. Enumeration is lexicographic in `(t, s, y)` with action 0 first,
/// and only strict improvements replace the incumbent.
pub fn plan_bruteforce_capped(
    aug: &AugmentedMdp,
    g: &WeightingFunction,
    cap: u64,
) -> Result<(AugmentedPolicy, f64)> {
    let mut search = BruteForce {
        aug,
        g,
        cap,
        scanned: 0,
        actions: vec![vec![vec![0usize; aug.y_levels()]; aug.n_states()]; aug.horizon()],
        best: None,
    };
    let mut frontier: Vec<(usize, usize)> = aug.initial().map(|(s, _)| (s, 0)).collect();
    frontier.sort_unstable();
    search.layer(0, &frontier)?;
    let (actions, value) = search.best.expect("at least one policy scanned");
    Ok((
        AugmentedPolicy::deterministic(aug.eta(), &actions, aug.n_actions()),
        value,
    ))
}

struct BruteForce<'a> {
    aug: &'a AugmentedMdp,
    g: &'a WeightingFunction,
    cap: u64,
    scanned: u64,
    actions: Vec<Vec<Vec<usize>>>,
    best: Option<(Vec<Vec<Vec<usize>>>, f64)>,
}

impl BruteForce<'_> {
    fn layer(&mut self, t: usize, frontier: &[(usize, usize)]) -> Result<()> {
        if t == self.aug.horizon() {
            return self.leaf();
        }
        let n_a = self.aug.n_actions();
        let mut choice = vec![0usize; frontier.len()];
        loop {
            for (&(s, y), &a) in frontier.iter().zip(&choice) {
                self.actions[t][s][y] = a;
            }
            let mut next: Vec<(usize, usize)> = frontier
                .iter()
                .zip(&choice)
                .flat_map(|(&(s, y), &a)| self.aug.successors(s, y, a).map(|(s2, y2, _)| (s2, y2)))
                .collect();
            next.sort_unstable();
            next.dedup();
            self.layer(t + 1, &next)?;
            // Odometer with the first cell most significant.
            let mut i = choice.len();
            loop {
                if i == 0 {
                    for &(s, y) in frontier {
                        self.actions[t][s][y] = 0;
                    }
                    return Ok(());
                }
                i -= 1;
                choice[i] += 1;
                if choice[i] < n_a {
                    break;
                }
                choice[i] = 0;
            }
        }
    }

    fn leaf(&mut self) -> Result<()> {
        self.scanned += 1;
        if self.scanned > self.cap {
            return Err(Error::OracleTooLarge {
                what: "deterministic policy enumeration".into(),
                cap: self.cap,
            });
        }
        let policy =
            AugmentedPolicy::deterministic(self.aug.eta(), &self.actions, self.aug.n_actions());
        let value = phi_quantile(&evaluate_unchecked(self.aug, &policy), self.g);
        let improves = match &self.best {
            None => true,
            Some((_, v)) => value > v + TIE_TOL,
        };
        if improves {
            self.best = Some((self.actions.clone(), value));
        }
        Ok(())
    }
}
