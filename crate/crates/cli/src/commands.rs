use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use risklab::augment::{build_augmented, AugmentedMdp, AugmentedPolicy};
use risklab::envs::{make_frozen_lake, make_test_mdps, FrozenLakeSpec, ACTION_NAMES};
use risklab::learner::{optimism_audit, run_learning, LearnerConfig, Mode, RegretTrace};
use risklab::mdp::{exact_return_distribution, MarkovPolicy};
use risklab::planner::{evaluate_policy_distribution, plan_bruteforce, plan_cvar, CvarPlanResult};
use risklab::riskdist::{phi_cdf, phi_quantile, DiscreteDistribution, WeightingFunction};
use serde::{Deserialize, Serialize};

use crate::config::{Environment, PlannerKind, PolicyConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{regret_svg, write_json, write_text, write_trace_csv, Band};

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn planning_model(config: &RunConfig, env: &Environment) -> CliResult<AugmentedMdp> {
    Ok(build_augmented(
        &env.mdp,
        config.eta.unwrap_or(env.mdp.eta()),
    )?)
}

/// Return law with its support multiplied by `scale`.
fn scaled(dist: &DiscreteDistribution, scale: f64) -> DiscreteDistribution {
    DiscreteDistribution::new(
        dist.grid().iter().map(|z| z * scale).collect(),
        dist.mass().to_vec(),
    )
    .expect("scaling by a positive factor keeps a valid law")
}

#[derive(Serialize, Deserialize)]
pub struct PlanReport {
    pub env: String,
    pub planner: PlannerKind,
    pub weighting: WeightingFunction,
    pub scale: f64,
    /// Objective of the planned policy in model units.
    pub value: f64,
    /// `value` multiplied by `scale`.
    pub value_scaled: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_alpha: Option<f64>,
    /// Return law of the planned policy in reported units.
    pub distribution: DiscreteDistribution,
    /// Objective of the best policy for each threshold on the return
    /// lattice, in reported units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_by_rho: Option<Vec<f64>>,
    pub policy: AugmentedPolicy,
}

pub fn plan(config: &RunConfig, out: &Path) -> CliResult<PlanReport> {
    let env = config.environment()?;
    let aug = planning_model(config, &env)?;
    let g = config.single_weighting()?;
    let (policy, value, cvar): (AugmentedPolicy, f64, Option<CvarPlanResult>) = match config.planner
    {
        PlannerKind::Dp => {
            let alpha = g.cvar_level().ok_or_else(|| {
                CliError::Usage(
                    "the dp planner handles CVaR and expectation; use planner \"bruteforce\" for other weightings"
                        .into(),
                )
            })?;
            let r = plan_cvar(&aug, alpha)?;
            (r.policy.clone(), r.value, Some(r))
        }
        PlannerKind::Bruteforce => {
            let (policy, value) = plan_bruteforce(&aug, &g)?;
            (policy, value, None)
        }
    };
    let dist = evaluate_policy_distribution(&aug, &policy)?;
    let report = PlanReport {
        env: env.name.clone(),
        planner: config.planner,
        weighting: g,
        scale: env.scale,
        value,
        value_scaled: value * env.scale,
        rho_star: cvar.as_ref().map(|r| r.rho_star * env.scale),
        var_alpha: cvar.as_ref().map(|r| r.var_alpha * env.scale),
        distribution: scaled(&dist, env.scale),
        objective_by_rho: cvar.map(|r| r.objective_by_rho.iter().map(|v| v * env.scale).collect()),
        policy,
    };
    ensure_dir(out)?;
    write_json(&out.join("plan.json"), &report)?;
    write_text(
        &out.join("policy.txt"),
        &policy_table(&aug, &report.policy, &env),
    )?;
    Ok(report)
}

/// Plain-text listing of the action taken in every augmented cell the
/// policy reaches with positive probability.
fn policy_table(aug: &AugmentedMdp, policy: &AugmentedPolicy, env: &Environment) -> String {
    let (n_s, n_y) = (aug.n_states(), aug.y_levels());
    let state_name = |s: usize| match &env.lake {
        Some(lake) if s == lake.hole => "hole".to_string(),
        Some(lake) => format!("({},{})", lake.cells[s].0, lake.cells[s].1),
        None => s.to_string(),
    };
    let action_name = |a: usize| match &env.lake {
        Some(_) => ACTION_NAMES[a].to_string(),
        None => a.to_string(),
    };
    let mut occ = vec![vec![0.0; n_y]; n_s];
    for (s, p) in aug.initial() {
        occ[s][0] += p;
    }
    let mut text = String::from("t\tstate\treturn_so_far\tprob\taction\n");
    for t in 0..aug.horizon() {
        let mut next = vec![vec![0.0; n_y]; n_s];
        for s in 0..n_s {
            for y in 0..n_y {
                let m = occ[s][y];
                if m <= 0.0 {
                    continue;
                }
                let probs = policy.probs(t, s, y);
                let a = policy.mode(t, s, y);
                let shown = if probs[a] >= 1.0 {
                    action_name(a)
                } else {
                    let parts: Vec<String> = probs
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p > 0.0)
                        .map(|(b, p)| format!("{}:{p:.3}", action_name(b)))
                        .collect();
                    parts.join(",")
                };
                let _ = writeln!(
                    text,
                    "{t}\t{}\t{}\t{m:.6}\t{shown}",
                    state_name(s),
                    aug.payoff(y) * env.scale
                );
                for (b, &pb) in probs.iter().enumerate() {
                    if pb > 0.0 {
                        for (s2, y2, p) in aug.successors(s, y, b) {
                            next[s2][y2] += m * pb * p;
                        }
                    }
                }
            }
        }
        occ = next;
    }
    text
}

#[derive(Serialize)]
pub struct EvalReport {
    pub env: String,
    pub weighting: WeightingFunction,
    pub scale: f64,
    /// Return law in reported units.
    pub distribution: DiscreteDistribution,
    pub phi_quantile: f64,
    pub phi_cdf: f64,
    pub abs_diff: f64,
}

pub fn eval(config: &RunConfig, out: &Path) -> CliResult<EvalReport> {
    let env = config.environment()?;
    let g = config.single_weighting()?;
    let policy = config
        .policy
        .as_ref()
        .ok_or_else(|| CliError::Usage("eval needs a policy in the config".into()))?;
    let dist = match policy {
        PolicyConfig::Corridor { action } => {
            let lake = env.lake.as_ref().ok_or_else(|| {
                CliError::Usage("corridor policies exist only on the frozen lake".into())
            })?;
            if *action >= ACTION_NAMES.len() {
                return Err(CliError::Usage(format!("no corridor for action {action}")));
            }
            exact_return_distribution(&env.mdp, &lake.corridor_policy(*action))?
        }
        PolicyConfig::Constant { action } => {
            if *action >= env.mdp.n_actions() {
                return Err(CliError::Usage(format!("no action {action}")));
            }
            let pi = MarkovPolicy::constant(
                *action,
                env.mdp.horizon(),
                env.mdp.n_states(),
                env.mdp.n_actions(),
            );
            exact_return_distribution(&env.mdp, &pi)?
        }
        PolicyConfig::Plan { path } => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let plan: PlanReport = serde_json::from_str(&text).map_err(|e| CliError::Config {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let aug = build_augmented(&env.mdp, plan.policy.eta)?;
            evaluate_policy_distribution(&aug, &plan.policy)?
        }
    };
    let dist = scaled(&dist, env.scale);
    let pq = phi_quantile(&dist, &g);
    let pc = phi_cdf(&dist, &g);
    let report = EvalReport {
        env: env.name,
        weighting: g,
        scale: env.scale,
        distribution: dist,
        phi_quantile: pq,
        phi_cdf: pc,
        abs_diff: (pq - pc).abs(),
    };
    ensure_dir(out)?;
    write_json(&out.join("eval.json"), &report)?;
    Ok(report)
}

#[derive(Serialize)]
struct RunSummary {
    label: String,
    weighting: WeightingFunction,
    mode: Mode,
    seed: u64,
    trace: PathBuf,
    /// Optimal objective in reported units.
    phi_star: f64,
    /// Cumulative regret after the last episode, in reported units.
    total_regret: f64,
    optimal_first_action: usize,
    /// Most likely positive return of the optimal policy, in reported units.
    optimal_modal_return: f64,
    /// Share of episodes `k > K/2` whose played policy has the optimal
    /// modal return.
    late_match_fraction: f64,
    /// Mean per-episode regret over the first tenth of the run.
    early_mean_regret: f64,
    /// Mean per-episode regret over episodes `k > K/2`.
    late_mean_regret: f64,
    optimism_violation_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize)]
struct GroupSummary {
    label: String,
    seeds: usize,
    mean_total_regret: f64,
    stdev_total_regret: f64,
    median_total_regret: f64,
}

#[derive(Serialize)]
struct LearnSummary<'a> {
    env: String,
    scale: f64,
    config: &'a RunConfig,
    runs: Vec<RunSummary>,
    totals: Vec<GroupSummary>,
    plots: Vec<PathBuf>,
}

fn weighting_label(g: &WeightingFunction) -> String {
    match g.cvar_level() {
        Some(a) if a < 1.0 => format!("cvar{a}"),
        _ => "mean".to_string(),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Mean of `regret_k` over episodes `from < k <= to`.
fn mean_regret(trace: &RegretTrace, from: u64, to: u64) -> f64 {
    let picked: Vec<f64> = trace
        .records
        .iter()
        .filter(|r| r.k > from && r.k <= to)
        .map(|r| r.regret_k)
        .collect();
    picked.iter().sum::<f64>() / picked.len().max(1) as f64
}

fn late_match_fraction(trace: &RegretTrace) -> f64 {
    let half = trace.config.episodes / 2;
    let late: Vec<_> = trace.records.iter().filter(|r| r.k > half).collect();
    let hits = late
        .iter()
        .filter(|r| (r.modal_return - trace.optimal_modal_return).abs() < 1e-9)
        .count();
    hits as f64 / late.len().max(1) as f64
}

pub fn learn(config: &RunConfig, out: &Path) -> CliResult<()> {
    if config.seeds.is_empty() {
        return Err(CliError::Usage("seed list is empty".into()));
    }
    if config.modes.is_empty() {
        return Err(CliError::Usage("mode list is empty".into()));
    }
    let env = config.environment()?;
    let weightings = config.sweep_weightings()?;
    let eta = config.eta.unwrap_or(env.mdp.eta());
    let mut jobs = Vec::new();
    for g in &weightings {
        for &mode in &config.modes {
            for &seed in &config.seeds {
                jobs.push(LearnerConfig {
                    episodes: config.episodes,
                    delta: config.delta,
                    eta,
                    weighting: g.clone(),
                    mode,
                    seed,
                    width_scale: config.width_scale,
                });
            }
        }
    }
    // Reject a bad configuration before any worker starts.
    run_learning(
        &env.mdp,
        &LearnerConfig {
            episodes: 1,
            ..jobs[0].clone()
        },
    )?;

    ensure_dir(out)?;
    let traces: Vec<CliResult<(RegretTrace, PathBuf)>> = jobs
        .par_iter()
        .map(|job| {
            let trace = run_learning(&env.mdp, job)?;
            let name = format!(
                "trace_{}_{}_seed{}.csv",
                weighting_label(&job.weighting),
                job.mode.name(),
                job.seed
            );
            write_trace_csv(&out.join(&name), &trace, env.scale)?;
            Ok((trace, PathBuf::from(name)))
        })
        .collect();
    let traces = traces.into_iter().collect::<CliResult<Vec<_>>>()?;

    let runs: Vec<RunSummary> = traces
        .iter()
        .map(|(trace, file)| {
            let c = &trace.config;
            RunSummary {
                label: format!("{} {}", weighting_label(&c.weighting), c.mode.name()),
                weighting: c.weighting.clone(),
                mode: c.mode,
                seed: c.seed,
                trace: file.clone(),
                phi_star: trace.phi_star * env.scale,
                total_regret: trace.total_regret() * env.scale,
                optimal_first_action: trace.optimal_first_action,
                optimal_modal_return: trace.optimal_modal_return * env.scale,
                late_match_fraction: late_match_fraction(trace),
                early_mean_regret: mean_regret(trace, 0, (c.episodes / 10).max(1)) * env.scale,
                late_mean_regret: mean_regret(trace, c.episodes / 2, c.episodes) * env.scale,
                optimism_violation_fraction: optimism_audit(trace).violation_fraction,
                note: trace.note.clone(),
            }
        })
        .collect();

    let mut totals = Vec::new();
    let mut groups: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (trace, _) in &traces {
        let label = format!(
            "{} {}",
            weighting_label(&trace.config.weighting),
            trace.config.mode.name()
        );
        let curve: Vec<f64> = trace
            .records
            .iter()
            .map(|r| r.regret_cum * env.scale)
            .collect();
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, curves)) => curves.push(curve),
            None => groups.push((label, vec![curve])),
        }
    }
    for (label, curves) in &groups {
        let mut finals: Vec<f64> = curves.iter().map(|c| *c.last().unwrap_or(&0.0)).collect();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let sd = (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        totals.push(GroupSummary {
            label: label.clone(),
            seeds: curves.len(),
            mean_total_regret: mean,
            stdev_total_regret: sd,
            median_total_regret: median(&mut finals),
        });
    }

    let mut plots = Vec::new();
    if config.plots {
        // One chart per objective comparing modes, and one per mode
        // comparing objectives when several were swept.
        for g in &weightings {
            let prefix = weighting_label(g);
            let bands: Vec<Band> = groups
                .iter()
                .filter(|(l, _)| l.split(' ').next() == Some(prefix.as_str()))
                .map(|(l, c)| Band::from_curves(l.clone(), c))
                .collect();
            let name = PathBuf::from(format!("regret_{prefix}.svg"));
            write_text(
                &out.join(&name),
                &regret_svg(&format!("{} regret, {}", env.name, prefix), &bands),
            )?;
            plots.push(name);
        }
        if weightings.len() > 1 {
            for &mode in &config.modes {
                let bands: Vec<Band> = groups
                    .iter()
                    .filter(|(l, _)| l.split(' ').nth(1) == Some(mode.name()))
                    .map(|(l, c)| Band::from_curves(l.clone(), c))
                    .collect();
                let name = PathBuf::from(format!("regret_by_alpha_{}.svg", mode.name()));
                write_text(
                    &out.join(&name),
                    &regret_svg(
                        &format!("{} regret by objective, {}", env.name, mode.name()),
                        &bands,
                    ),
                )?;
                plots.push(name);
            }
        }
    }

    let summary = LearnSummary {
        env: env.name,
        scale: env.scale,
        config,
        runs,
        totals,
        plots,
    };
    write_json(&out.join("summary.json"), &summary)
}

#[derive(Serialize)]
pub struct EnvEntry {
    pub name: String,
    pub states: usize,
    pub actions: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub eta: f64,
}

pub fn envs_list() -> CliResult<Vec<EnvEntry>> {
    let lake = make_frozen_lake(&FrozenLakeSpec::default())?;
    let mut entries = vec![EnvEntry {
        name: "frozen_lake".into(),
        states: lake.mdp.n_states(),
        actions: lake.mdp.n_actions(),
        horizon: lake.mdp.horizon(),
        eta: lake.mdp.eta(),
    }];
    for m in make_test_mdps() {
        entries.push(EnvEntry {
            name: m.name.into(),
            states: m.mdp.n_states(),
            actions: m.mdp.n_actions(),
            horizon: m.mdp.horizon(),
            eta: m.mdp.eta(),
        });
    }
    Ok(entries)
}
