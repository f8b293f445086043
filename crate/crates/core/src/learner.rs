//! The episodic optimistic learner and its baselines.
//!
//! Each episode builds a model from the counts of earlier episodes, plans a
//! risk-optimal augmented policy on it, runs that policy on the true model
//! and records the exact regret of the played policy.

use serde::{Deserialize, Serialize};

use crate::augment::{adapt_policy, build_augmented, AugmentedMdp, AugmentedPolicy};
use crate::error::{Error, Result};
use crate::mdp::{rollout_stream, TabularMdp};
use crate::optimist::{confidence_widths, empirical_model, optimistic_model, CountsModel};
use crate::planner::{evaluate_policy_distribution, plan_cvar, plan_expectation};
use crate::riskdist::{phi_quantile, DiscreteDistribution, WeightingFunction};

/// Tolerance used for the optimism and nonnegative-regret checks.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Plan the target objective on the optimistic model.
    Ucb,
    /// Plan the target objective on the plain empirical model.
    Greedy,
    /// Plan expected return on the optimistic model.
    ExpectedUcb,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ucb => "ucb",
            Mode::Greedy => "greedy",
            Mode::ExpectedUcb => "expected-ucb",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucb" => Ok(Mode::Ucb),
            "greedy" => Ok(Mode::Greedy),
            "expected-ucb" => Ok(Mode::ExpectedUcb),
            other => Err(Error::domain(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub episodes: u64,
    pub delta: f64,
    pub eta: f64,
    pub weighting: WeightingFunction,
    pub mode: Mode,
    pub seed: u64,
    /// Multiplier on both confidence widths; 1 uses them unscaled.
    #[serde(default = "unit_scale")]
    pub width_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl LearnerConfig {
    /// Checks the configuration against the true model and returns the CVaR
    /// level of the objective (1 for expectation).
    fn validate(&self, mdp: &TabularMdp) -> Result<f64> {
        if self.episodes == 0 {
            return Err(Error::domain("episodes must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::domain(format!(
                "delta = {} not in (0, 1]",
                self.delta
            )));
        }
        if !(self.eta > 0.0) {
            return Err(Error::domain(format!(
                "eta = {} must be positive",
                self.eta
            )));
        }
        if (self.eta - mdp.eta()).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "learner eta {} must equal the environment reward lattice {}",
                self.eta,
                mdp.eta()
            )));
        }
        if !(self.width_scale >= 0.0 && self.width_scale.is_finite()) {
            return Err(Error::domain(format!(
                "width scale {} must be finite and nonnegative",
                self.width_scale
            )));
        }
        if !self.weighting.is_lipschitz() {
            return Err(Error::domain(
                "weighting has no finite Lipschitz constant; the learner needs one",
            ));
        }
        self.weighting
            .cvar_level()
            .ok_or_else(|| Error::domain("the learner plans CVaR or expectation objectives only"))
    }
}

/// One row of a regret trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// One-based episode index.
    pub k: u64,
    /// Objective of the played policy on the true model.
    pub phi_true: f64,
    /// Objective of the played policy on the model it was planned on.
    pub phi_opt: f64,
    pub regret_k: f64,
    pub regret_cum: f64,
    /// Action the policy takes at `t = 0` in the most likely initial state.
    pub first_action: usize,
    /// Hash of the played policy's action table on the true states.
    pub policy_id: u64,
    /// Most likely strictly positive return of the played policy on the true
    /// model (the smaller one on ties), or 0 if it never earns anything.
    pub modal_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub config: LearnerConfig,
    pub phi_star: f64,
    /// Action of the optimal policy at `t = 0` in the most likely initial
    /// state.
    pub optimal_first_action: usize,
    /// `modal_return` of the optimal policy.
    pub optimal_modal_return: f64,
    pub records: Vec<EpisodeRecord>,
    pub note: Option<String>,
}

impl RegretTrace {
    pub fn total_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.regret_cum)
    }
}

/// Optimal augmented policy for CVaR at `level` (expectation at 1).
fn plan(aug: &AugmentedMdp, level: f64) -> Result<AugmentedPolicy> {
    if level >= 1.0 {
        Ok(plan_expectation(aug).0)
    } else {
        Ok(plan_cvar(aug, level)?.policy)
    }
}

fn objective(aug: &AugmentedMdp, policy: &AugmentedPolicy, g: &WeightingFunction) -> Result<f64> {
    Ok(phi_quantile(&evaluate_policy_distribution(aug, policy)?, g))
}

fn modal_positive(dist: &DiscreteDistribution) -> f64 {
    let mut best = (0.0, 0.0);
    for (&x, &p) in dist.grid().iter().zip(dist.mass()) {
        if x > 0.0 && p > best.1 + 1e-12 {
            best = (x, p);
        }
    }
    best.0
}

fn policy_hash(policy: &AugmentedPolicy) -> u64 {
    // FNV-1a over the action chosen in every cell.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for per_s in &policy.probs {
        for per_y in per_s {
            for row in per_y {
                let mut best = 0;
                for (a, p) in row.iter().enumerate() {
                    if *p > row[best] {
                        best = a;
                    }
                }
                h ^= best as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

fn likely_start(mdp: &TabularMdp) -> usize {
    let init = mdp.init();
    let mut best = 0;
    for (s, &p) in init.iter().enumerate() {
        if p > init[best] {
            best = s;
        }
    }
    best
}

/// Runs the learner for `config.episodes` episodes against `truth`.
pub fn run_learning(truth: &TabularMdp, config: &LearnerConfig) -> Result<RegretTrace> {
    let level = config.validate(truth)?;
    let target = config.weighting.clone();
    let true_aug = build_augmented(truth, config.eta)?;
    let optimal = plan(&true_aug, level)?;
    let optimal_law = evaluate_policy_distribution(&true_aug, &optimal)?;
    let phi_star = phi_quantile(&optimal_law, &target);
    let start = likely_start(truth);

    let plan_level = match config.mode {
        Mode::ExpectedUcb => 1.0,
        _ => level,
    };

    let mut counts = CountsModel::new(truth);
    let mut records = Vec::with_capacity(config.episodes as usize);
    let mut regret_cum = 0.0;
    for k in 1..=config.episodes {
        let empirical = empirical_model(&counts);
        let model = match config.mode {
            Mode::Greedy => empirical.mdp,
            Mode::Ucb | Mode::ExpectedUcb => {
                let widths = confidence_widths(&counts, config.episodes, config.delta)?
                    .scaled(config.width_scale);
                optimistic_model(&empirical, &widths)?.mdp
            }
        };
        let model_aug = build_augmented(&model, config.eta)?;
        let planned = plan(&model_aug, plan_level)?;
        let phi_opt = objective(&model_aug, &planned, &target)?;
        let played = planned.truncate_states(truth.n_states());
        let true_law = evaluate_policy_distribution(&true_aug, &played)?;
        let phi_true = phi_quantile(&true_law, &target);
        let regret_k = phi_star - phi_true;
        regret_cum += regret_k;

        let adapted = adapt_policy(&played, config.eta)?;
        let episode = rollout_stream(truth, &adapted, config.seed, k)?;
        counts.record(&episode)?;

        records.push(EpisodeRecord {
            k,
            phi_true,
            phi_opt,
            regret_k,
            regret_cum,
            first_action: played.mode(0, start, 0),
            policy_id: policy_hash(&played),
            modal_return: modal_positive(&true_law),
        });
    }
    let note = (config.mode == Mode::ExpectedUcb).then(|| {
        "expected-return baseline: this learner planning for expectation on the optimistic model"
            .to_string()
    });
    Ok(RegretTrace {
        config: config.clone(),
        phi_star,
        optimal_first_action: optimal.mode(0, start, 0),
        optimal_modal_return: modal_positive(&optimal_law),
        records,
        note,
    })
}

/// Episodes where the planning-model objective fell below the true one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimismAudit {
    pub episodes: usize,
    pub violations: Vec<u64>,
    pub violation_fraction: f64,
    pub optimistic_fraction: f64,
}

pub fn optimism_audit(trace: &RegretTrace) -> OptimismAudit {
    let violations: Vec<u64> = trace
        .records
        .iter()
        .filter(|r| r.phi_opt < r.phi_true - AUDIT_TOL)
        .map(|r| r.k)
        .collect();
    let episodes = trace.records.len();
    let violation_fraction = if episodes == 0 {
        0.0
    } else {
        violations.len() as f64 / episodes as f64
    };
    OptimismAudit {
        episodes,
        violations,
        violation_fraction,
        optimistic_fraction: 1.0 - violation_fraction,
    }
}
