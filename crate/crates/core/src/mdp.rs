//! Finite-horizon tabular MDPs with lattice-valued rewards, seeded episode
//! simulation, and an exhaustive trajectory-enumeration oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riskdist::DiscreteDistribution;

/// Default leaf budget for exhaustive enumeration oracles.
pub const ORACLE_CAP: u64 = 10_000_000;

const PROB_TOL: f64 = 1e-12;
const LATTICE_TOL: f64 = 1e-9;

/// Finite-horizon MDP. Rewards are histograms over the lattice
/// `{0, η, 2η, …, 1}`; `1/η` must be an integer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    eta: f64,
    init: Vec<f64>,
    /// `trans[s][a][s']`
    trans: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a][i]` = probability of reward `i·η`
    rewards: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct RawMdp {
    n_states: usize,
    n_actions: usize,
    #[serde(rename = "T")]
    horizon: usize,
    eta: f64,
    init: Vec<f64>,
    trans: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<RawMdp> for TabularMdp {
    type Error = Error;

    fn try_from(raw: RawMdp) -> Result<Self> {
        let mdp = TabularMdp::new(raw.horizon, raw.eta, raw.init, raw.trans, raw.rewards)?;
        if mdp.n_states != raw.n_states || mdp.n_actions != raw.n_actions {
            return Err(Error::invalid_mdp(format!(
                "declared {}x{} states x actions, tables are {}x{}",
                raw.n_states, raw.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(mdp)
    }
}

impl From<TabularMdp> for RawMdp {
    fn from(m: TabularMdp) -> Self {
        RawMdp {
            n_states: m.n_states,
            n_actions: m.n_actions,
            horizon: m.horizon,
            eta: m.eta,
            init: m.init,
            trans: m.trans,
            rewards: m.rewards,
        }
    }
}

fn check_prob_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::invalid_mdp(format!("{what}: negative or NaN entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::invalid_mdp(format!("{what}: sums to {total}")));
    }
    Ok(())
}

/// Number of lattice steps of size `eta` in the unit interval, if integral.
pub fn steps_per_unit(eta: f64) -> Result<usize> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::domain(format!("eta = {eta} must be positive")));
    }
    let n = (1.0 / eta).round();
    if n < 1.0 || ((1.0 / eta) - n).abs() > LATTICE_TOL * n.max(1.0) {
        return Err(Error::domain(format!(
            "1/eta must be an integer, got eta = {eta}"
        )));
    }
    Ok(n as usize)
}

impl TabularMdp {
    /// Validates and builds a model. Reward histograms shorter than the
    /// lattice are zero-padded.
    pub fn new(
        horizon: usize,
        eta: f64,
        init: Vec<f64>,
        trans: Vec<Vec<Vec<f64>>>,
        mut rewards: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let per_unit = steps_per_unit(eta)?;
        if horizon == 0 {
            return Err(Error::invalid_mdp("horizon must be at least 1"));
        }
        let n_states = init.len();
        if n_states == 0 {
            return Err(Error::invalid_mdp("no states"));
        }
        check_prob_vector(&init, "initial distribution")?;
        if trans.len() != n_states || rewards.len() != n_states {
            return Err(Error::invalid_mdp(
                "transition/reward tables must have one row per state",
            ));
        }
        let n_actions = trans[0].len();
        if n_actions == 0 {
            return Err(Error::invalid_mdp("no actions"));
        }
        for s in 0..n_states {
            if trans[s].len() != n_actions || rewards[s].len() != n_actions {
                return Err(Error::invalid_mdp(format!(
                    "state {s}: wrong number of actions"
                )));
            }
            for a in 0..n_actions {
                if trans[s][a].len() != n_states {
                    return Err(Error::invalid_mdp(format!(
                        "P(.|{s},{a}) has {} entries, expected {n_states}",
                        trans[s][a].len()
                    )));
                }
                check_prob_vector(&trans[s][a], &format!("P(.|{s},{a})"))?;
                let hist = &mut rewards[s][a];
                if hist.len() > per_unit + 1 {
                    return Err(Error::invalid_mdp(format!(
                        "reward histogram at ({s},{a}) has support above 1"
                    )));
                }
                hist.resize(per_unit + 1, 0.0);
                check_prob_vector(hist, &format!("reward law at ({s},{a})"))?;
            }
        }
        Ok(TabularMdp {
            n_states,
            n_actions,
            horizon,
            eta,
            init,
            trans,
            rewards,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn trans(&self, s: usize, a: usize) -> &[f64] {
        &self.trans[s][a]
    }

    /// Histogram over reward lattice indices at `(s, a)`.
    pub fn reward_hist(&self, s: usize, a: usize) -> &[f64] {
        &self.rewards[s][a]
    }

    pub fn reward_distribution(&self, s: usize, a: usize) -> DiscreteDistribution {
        DiscreteDistribution::from_lattice(self.eta, &self.rewards[s][a])
            .expect("validated reward histogram")
    }

    /// Lattice index of reward 1, i.e. `1/η`.
    pub fn reward_top(&self) -> usize {
        self.rewards[0][0].len() - 1
    }

    /// Number of cumulative-reward levels `T/η + 1`.
    pub fn return_levels(&self) -> usize {
        self.horizon * self.reward_top() + 1
    }

    /// Sparse view of `P(·|s,a)`: `(s', p)` with `p > 0`.
    pub fn successors(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        nonzero(&self.trans[s][a])
    }

    /// Sparse view of the reward law: `(lattice index, p)` with `p > 0`.
    pub fn reward_atoms(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        nonzero(&self.rewards[s][a])
    }
}

pub(crate) fn nonzero(p: &[f64]) -> impl Iterator<Item = (usize, f64)> + '_ {
    p.iter().copied().enumerate().filter(|(_, x)| *x > 0.0)
}

/// The observable prefix of an episode. `states` has one more entry than
/// `actions` and `rewards`: its last element is the current state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct History {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    /// Reward lattice indices.
    pub rewards: Vec<u32>,
}

impl History {
    pub fn start(state: usize) -> Self {
        History {
            states: vec![state],
            actions: Vec::new(),
            rewards: Vec::new(),
        }
    }

    /// Number of completed steps, i.e. the zero-based time index.
    pub fn t(&self) -> usize {
        self.actions.len()
    }

    pub fn current_state(&self) -> usize {
        *self.states.last().expect("history has a current state")
    }

    /// Cumulative reward so far as a lattice index.
    pub fn cumulative_index(&self) -> u64 {
        self.rewards.iter().map(|&r| r as u64).sum()
    }

    fn push(&mut self, action: usize, reward: u32, next: usize) {
        self.actions.push(action);
        self.rewards.push(reward);
        self.states.push(next);
    }

    fn pop(&mut self) {
        self.actions.pop();
        self.rewards.pop();
        self.states.pop();
    }
}

/// A stochastic, time-varying, history-dependent policy.
///
/// Rewards in the history are lattice indices at `eta`, the lattice step of
/// the MDP being run.
pub trait HistoryPolicy: Sync {
    fn action_probs(&self, history: &History, eta: f64) -> Result<Vec<f64>>;
}

impl<F> HistoryPolicy for F
where
    F: Fn(&History) -> Vec<f64> + Sync,
{
    fn action_probs(&self, history: &History, _eta: f64) -> Result<Vec<f64>> {
        Ok(self(history))
    }
}

/// Policy ignoring history: `table[t][s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    pub table: Vec<Vec<Vec<f64>>>,
}

impl MarkovPolicy {
    /// Deterministic policy choosing `actions[t][s]`.
    pub fn deterministic(actions: &[Vec<usize>], n_actions: usize) -> Self {
        let table = actions
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&a| {
                        let mut p = vec![0.0; n_actions];
                        p[a] = 1.0;
                        p
                    })
                    .collect()
            })
            .collect();
        MarkovPolicy { table }
    }

    /// Same action at every step in every state.
    pub fn constant(action: usize, horizon: usize, n_states: usize, n_actions: usize) -> Self {
        Self::deterministic(&vec![vec![action; n_states]; horizon], n_actions)
    }
}

impl HistoryPolicy for MarkovPolicy {
    fn action_probs(&self, history: &History, _eta: f64) -> Result<Vec<f64>> {
        self.table
            .get(history.t())
            .and_then(|row| row.get(history.current_state()))
            .cloned()
            .ok_or_else(|| Error::contract("Markov policy table too small"))
    }
}

pub(crate) fn checked_probs(probs: Vec<f64>, n_actions: usize) -> Result<Vec<f64>> {
    if probs.len() != n_actions {
        return Err(Error::contract(format!(
            "policy returned {} probabilities for {n_actions} actions",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::contract(
            "policy returned a negative or NaN probability",
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "policy probabilities sum to {total}"
        )));
    }
    Ok(probs)
}

/// One transition of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    /// Reward lattice index.
    pub reward: u32,
}

/// A full rollout of length `T`, plus the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<Step>,
    pub final_state: usize,
    pub eta: f64,
    pub seed: u64,
    pub stream: u64,
}

impl Episode {
    pub fn return_index(&self) -> u64 {
        self.steps.iter().map(|s| s.reward as u64).sum()
    }

    /// `J(ξ) = Σ r_t`.
    pub fn total_reward(&self) -> f64 {
        self.return_index() as f64 * self.eta
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| s.reward as f64 * self.eta)
            .collect()
    }
}

/// Independent random stream `stream` under the root seed.
pub fn episode_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Samples one episode using stream 0 of `seed`.
pub fn rollout(mdp: &TabularMdp, policy: &dyn HistoryPolicy, seed: u64) -> Result<Episode> {
    rollout_stream(mdp, policy, seed, 0)
}

/// Samples one episode from stream `stream` of the root `seed`.
pub fn rollout_stream(
    mdp: &TabularMdp,
    policy: &dyn HistoryPolicy,
    seed: u64,
    stream: u64,
) -> Result<Episode> {
    let mut rng = episode_rng(seed, stream);
    let s0 = sample_index(&mut rng, mdp.init());
    let mut history = History::start(s0);
    let mut steps = Vec::with_capacity(mdp.horizon());
    for _ in 0..mdp.horizon() {
        let s = history.current_state();
        let probs = checked_probs(policy.action_probs(&history, mdp.eta())?, mdp.n_actions())?;
        let a = sample_index(&mut rng, &probs);
        let r = sample_index(&mut rng, mdp.reward_hist(s, a)) as u32;
        let next = sample_index(&mut rng, mdp.trans(s, a));
        steps.push(Step {
            state: s,
            action: a,
            reward: r,
        });
        history.push(a, r, next);
    }
    Ok(Episode {
        steps,
        final_state: history.current_state(),
        eta: mdp.eta(),
        seed,
        stream,
    })
}

/// Exact law of the return `Σ r_t` by enumerating every trajectory with
/// positive probability, with the default [`ORACLE_CAP`].
pub fn exact_return_distribution(
    mdp: &TabularMdp,
    policy: &dyn HistoryPolicy,
) -> Result<DiscreteDistribution> {
    exact_return_distribution_capped(mdp, policy, ORACLE_CAP)
}

pub fn exact_return_distribution_capped(
    mdp: &TabularMdp,
    policy: &dyn HistoryPolicy,
    cap: u64,
) -> Result<DiscreteDistribution> {
    let mut hist = vec![0.0; mdp.return_levels()];
    let mut leaves = 0u64;
    for_each_history(mdp, policy, cap, &mut leaves, &mut |h, p, t| {
        if t == mdp.horizon() {
            hist[h.cumulative_index() as usize] += p;
        }
    })?;
    DiscreteDistribution::from_lattice(mdp.eta(), &hist)
}

/// Depth-first walk over all positive-probability histories. The visitor
/// receives every prefix (including the root of each initial state) with its
/// probability and length `t`. Policies are queried once per prefix with
/// `t < T`.
pub(crate) fn for_each_history(
    mdp: &TabularMdp,
    policy: &dyn HistoryPolicy,
    cap: u64,
    leaves: &mut u64,
    visit: &mut dyn FnMut(&History, f64, usize),
) -> Result<()> {
    for (s0, p0) in nonzero(mdp.init()) {
        let mut h = History::start(s0);
        walk(mdp, policy, &mut h, p0, cap, leaves, visit)?;
    }
    Ok(())
}

fn walk(
    mdp: &TabularMdp,
    policy: &dyn HistoryPolicy,
    h: &mut History,
    prob: f64,
    cap: u64,
    leaves: &mut u64,
    visit: &mut dyn FnMut(&History, f64, usize),
) -> Result<()> {
    let t = h.t();
    visit(h, prob, t);
    if t == mdp.horizon() {
        *leaves += 1;
        if *leaves > cap {
            return Err(Error::OracleTooLarge {
                what: "trajectory enumeration".into(),
                cap,
            });
        }
        return Ok(());
    }
    let s = h.current_state();
    let probs = checked_probs(policy.action_probs(h, mdp.eta())?, mdp.n_actions())?;
    for (a, pa) in nonzero(&probs) {
        for (r, pr) in mdp.reward_atoms(s, a) {
            for (next, pn) in mdp.successors(s, a) {
                h.push(a, r as u32, next);
                let res = walk(mdp, policy, h, prob * pa * pr * pn, cap, leaves, visit);
                h.pop();
                res?;
            }
        }
    }
    Ok(())
}
