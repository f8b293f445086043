//! Visit counts, empirical models, confidence widths and the optimistic
//! model with an absorbing maximal-reward state.

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentedMdp, AugmentedPolicy};
use crate::error::{Error, Result};
use crate::mdp::{Episode, TabularMdp};

/// Sufficient statistics of all episodes observed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub eta: f64,
    /// The known initial distribution.
    pub init: Vec<f64>,
    /// `visits[s][a]`
    pub visits: Vec<Vec<u64>>,
    /// `transitions[s][a][s']`
    pub transitions: Vec<Vec<Vec<u64>>>,
    /// `rewards[s][a][i]`: observations of reward `i·η`.
    pub rewards: Vec<Vec<Vec<u64>>>,
    /// Number of episodes recorded.
    pub episodes: u64,
}

impl CountsModel {
    /// Empty counts for a model shaped like `mdp` (only its sizes, horizon,
    /// lattice and initial law are used).
    pub fn new(mdp: &TabularMdp) -> Self {
        let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
        CountsModel {
            n_states: n_s,
            n_actions: n_a,
            horizon: mdp.horizon(),
            eta: mdp.eta(),
            init: mdp.init().to_vec(),
            visits: vec![vec![0; n_a]; n_s],
            transitions: vec![vec![vec![0; n_s]; n_a]; n_s],
            rewards: vec![vec![vec![0; mdp.reward_top() + 1]; n_a]; n_s],
            episodes: 0,
        }
    }

    fn reward_levels(&self) -> usize {
        self.rewards[0][0].len()
    }

    /// Adds every transition and reward of `episode` in place.
    pub fn record(&mut self, episode: &Episode) -> Result<()> {
        if (episode.eta - self.eta).abs() > 1e-12 {
            return Err(Error::ShapeMismatch(format!(
                "episode lattice {} differs from counts lattice {}",
                episode.eta, self.eta
            )));
        }
        if episode.steps.len() != self.horizon {
            return Err(Error::ShapeMismatch(format!(
                "episode has {} steps, horizon is {}",
                episode.steps.len(),
                self.horizon
            )));
        }
        let nexts = episode
            .steps
            .iter()
            .skip(1)
            .map(|s| s.state)
            .chain(std::iter::once(episode.final_state));
        let checked: Vec<_> = episode.steps.iter().zip(nexts).collect();
        for (step, next) in &checked {
            if step.state >= self.n_states
                || *next >= self.n_states
                || step.action >= self.n_actions
                || step.reward as usize >= self.reward_levels()
            {
                return Err(Error::ShapeMismatch(format!(
                    "step {step:?} -> {next} does not fit {} states, {} actions",
                    self.n_states, self.n_actions
                )));
            }
        }
        for (step, next) in checked {
            let (s, a) = (step.state, step.action);
            self.visits[s][a] += 1;
            self.transitions[s][a][next] += 1;
            self.rewards[s][a][step.reward as usize] += 1;
        }
        self.episodes += 1;
        Ok(())
    }

    pub fn total_visits(&self) -> u64 {
        self.visits.iter().flatten().sum()
    }
}

/// Pure form of [`CountsModel::record`].
pub fn update_counts(counts: &CountsModel, episode: &Episode) -> Result<CountsModel> {
    let mut next = counts.clone();
    next.record(episode)?;
    Ok(next)
}

/// Confidence widths per `(s, a)`; `+∞` where nothing has been observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widths {
    /// L1 width of the transition estimate.
    pub eps_p: Vec<Vec<f64>>,
    /// Sup-norm width of the reward CDF (and transition entries).
    pub eps_r: Vec<Vec<f64>>,
}

impl Widths {
    /// Widths identically `value`, shaped `n_states × n_actions`.
    pub fn constant(n_states: usize, n_actions: usize, value: f64) -> Self {
        Widths {
            eps_p: vec![vec![value; n_actions]; n_states],
            eps_r: vec![vec![value; n_actions]; n_states],
        }
    }

    /// Both widths multiplied by `factor`; infinite widths stay infinite.
    pub fn scaled(mut self, factor: f64) -> Self {
        for w in self.eps_p.iter_mut().chain(self.eps_r.iter_mut()).flatten() {
            if w.is_finite() {
                *w *= factor;
            }
        }
        self
    }
}

/// `L = ln(6|S||A|K/δ)`, `ε_P = √(2|S|L/N)`, `ε_R = √(L/(2N))`.
pub fn confidence_widths(counts: &CountsModel, episodes: u64, delta: f64) -> Result<Widths> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::domain(format!("delta = {delta} not in (0, 1]")));
    }
    if episodes == 0 {
        return Err(Error::domain("episode budget K must be at least 1"));
    }
    let n_s = counts.n_states as f64;
    let log_term = (6.0 * n_s * counts.n_actions as f64 * episodes as f64 / delta).ln();
    let width = |scale: f64| {
        move |&n: &u64| {
            if n == 0 {
                f64::INFINITY
            } else {
                (scale * log_term / n as f64).sqrt()
            }
        }
    };
    let map = |scale: f64| -> Vec<Vec<f64>> {
        counts
            .visits
            .iter()
            .map(|row| row.iter().map(width(scale)).collect())
            .collect()
    };
    Ok(Widths {
        eps_p: map(2.0 * n_s),
        eps_r: map(0.5),
    })
}

/// Empirical model; rows never visited hold uniform transitions and zero
/// reward and are flagged in `visited`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    pub mdp: TabularMdp,
    pub visited: Vec<Vec<bool>>,
}

pub fn empirical_model(counts: &CountsModel) -> EmpiricalModel {
    let (n_s, n_a) = (counts.n_states, counts.n_actions);
    let levels = counts.reward_levels();
    let mut trans = vec![vec![vec![0.0; n_s]; n_a]; n_s];
    let mut rewards = vec![vec![vec![0.0; levels]; n_a]; n_s];
    let mut visited = vec![vec![false; n_a]; n_s];
    for s in 0..n_s {
        for a in 0..n_a {
            let n = counts.visits[s][a];
            if n == 0 {
                trans[s][a].fill(1.0 / n_s as f64);
                rewards[s][a][0] = 1.0;
                continue;
            }
            visited[s][a] = true;
            let n = n as f64;
            for (p, &c) in trans[s][a].iter_mut().zip(&counts.transitions[s][a]) {
                *p = c as f64 / n;
            }
            for (p, &c) in rewards[s][a].iter_mut().zip(&counts.rewards[s][a]) {
                *p = c as f64 / n;
            }
        }
    }
    let mdp = TabularMdp::new(
        counts.horizon,
        counts.eta,
        counts.init.clone(),
        trans,
        rewards,
    )
    .expect("empirical frequencies form a valid model");
    EmpiricalModel { mdp, visited }
}

/// The optimistic model: the empirical model plus an absorbing state (the
/// last index) that pays reward 1 forever.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticModel {
    pub mdp: TabularMdp,
    pub widths: Widths,
}

impl OptimisticModel {
    /// Index of the absorbing optimism state.
    pub fn sink(&self) -> usize {
        self.mdp.n_states() - 1
    }
}

/// Down-shifts each transition probability and each reward CDF by
/// `ε_R(s, a)` (clamped at zero). Transition mass removed goes to the sink;
/// reward mass removed goes to reward 1.
pub fn optimistic_model(empirical: &EmpiricalModel, widths: &Widths) -> Result<OptimisticModel> {
    let base = &empirical.mdp;
    let (n_s, n_a) = (base.n_states(), base.n_actions());
    if widths.eps_r.len() != n_s || widths.eps_r.iter().any(|r| r.len() != n_a) {
        return Err(Error::ShapeMismatch("widths do not match the model".into()));
    }
    let sink = n_s;
    let top = base.reward_top();
    let mut trans = vec![vec![vec![0.0; n_s + 1]; n_a]; n_s + 1];
    let mut rewards = vec![vec![vec![0.0; top + 1]; n_a]; n_s + 1];
    for s in 0..n_s {
        for a in 0..n_a {
            let eps = if empirical.visited[s][a] {
                widths.eps_r[s][a]
            } else {
                f64::INFINITY
            };
            let row = &mut trans[s][a];
            let mut kept = 0.0;
            for (p, &q) in row.iter_mut().zip(base.trans(s, a)) {
                *p = (q - eps).max(0.0);
                kept += *p;
            }
            row[sink] = (1.0 - kept).max(0.0);

            let hist = &mut rewards[s][a];
            let mut cdf = 0.0;
            let mut prev_shifted = 0.0;
            for (i, &q) in base.reward_hist(s, a).iter().enumerate().take(top) {
                cdf += q;
                let shifted = (cdf - eps).max(0.0);
                hist[i] = (shifted - prev_shifted).max(0.0);
                prev_shifted = shifted;
            }
            hist[top] = (1.0 - prev_shifted).max(0.0);
        }
    }
    for a in 0..n_a {
        trans[sink][a][sink] = 1.0;
        rewards[sink][a][top] = 1.0;
    }
    let mut init = base.init().to_vec();
    init.push(0.0);
    let mdp = TabularMdp::new(base.horizon(), base.eta(), init, trans, rewards)?;
    Ok(OptimisticModel {
        mdp,
        widths: widths.clone(),
    })
}

/// Whether `truth` lies within the widths around `empirical`:
/// `‖P̃ − P‖₁ ≤ ε_P`, `‖P̃ − P‖∞ ≤ ε_R` and `‖F̃ − F‖∞ ≤ ε_R` at every
/// `(s, a)`.
pub fn within_widths(truth: &TabularMdp, empirical: &EmpiricalModel, widths: &Widths) -> bool {
    for s in 0..truth.n_states() {
        for a in 0..truth.n_actions() {
            if !empirical.visited[s][a] {
                continue;
            }
            let (ep, er) = (widths.eps_p[s][a], widths.eps_r[s][a]);
            let p = truth.trans(s, a);
            let q = empirical.mdp.trans(s, a);
            let l1: f64 = p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum();
            let linf = p
                .iter()
                .zip(q)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            let (mut fp, mut fq, mut cdf_gap) = (0.0, 0.0, 0.0f64);
            for (x, y) in truth
                .reward_hist(s, a)
                .iter()
                .zip(empirical.mdp.reward_hist(s, a))
            {
                fp += x;
                fq += y;
                cdf_gap = cdf_gap.max((fp - fq).abs());
            }
            if l1 > ep || linf > er || cdf_gap > er {
                return false;
            }
        }
    }
    true
}

/// `B(π) = E[Σ_t ε_P(s_t, a_t) + ε_R(s_t, a_t)]` for trajectories of
/// `policy` on `aug`.
pub fn expected_width_sum(
    aug: &AugmentedMdp,
    policy: &AugmentedPolicy,
    widths: &Widths,
) -> Result<f64> {
    policy.validate_for(aug)?;
    let (n_s, n_y) = (aug.n_states(), aug.y_levels());
    let mut occ = vec![vec![0.0; n_y]; n_s];
    for (s, p) in aug.initial() {
        occ[s][0] += p;
    }
    let mut total = 0.0;
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
                    total += m * pa * (widths.eps_p[s][a] + widths.eps_r[s][a]);
                    for (s2, y2, p) in aug.successors(s, y, a) {
                        next[s2][y2] += m * pa * p;
                    }
                }
            }
        }
        occ = next;
    }
    Ok(total)
}
