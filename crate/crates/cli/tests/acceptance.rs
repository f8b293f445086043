//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The learning criteria drive the `risklab` binary with the experiment
//! configs under `configs/` and read back `summary.json`.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risklab::augment::{adapt_policy, build_augmented, build_tilde_policy};
use risklab::envs::make_test_mdps;
use risklab::mdp::{exact_return_distribution, History};
use risklab::planner::{evaluate_policy_distribution, plan_bruteforce, plan_cvar};
use risklab::riskdist::{
    make_weighting, phi_cdf, phi_quantile, DiscreteDistribution, WeightingFunction, WeightingKind,
};
use serde_json::Value;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_distribution(rng: &mut ChaCha8Rng) -> DiscreteDistribution {
    let n = rng.gen_range(1..12);
    let mut x = -1.0;
    let mut grid = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);
    for _ in 0..n {
        x += rng.gen_range(0.01..3.0);
        grid.push(x);
        mass.push(rng.gen_range(0.001..1.0));
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    DiscreteDistribution::new(grid, mass).unwrap()
}

fn random_lipschitz_weighting(rng: &mut ChaCha8Rng) -> WeightingFunction {
    match rng.gen_range(0..3) {
        0 => WeightingFunction::cvar(rng.gen_range(0.01..=1.0)).unwrap(),
        1 => WeightingFunction::expectation(),
        _ => {
            let n = rng.gen_range(0..5);
            let mut taus: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
            let mut gs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            taus.sort_by(f64::total_cmp);
            taus.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            gs.truncate(taus.len());
            gs.sort_by(f64::total_cmp);
            let mut knots = vec![(0.0, 0.0)];
            knots.extend(taus.into_iter().zip(gs));
            knots.push((1.0, 1.0));
            make_weighting(WeightingKind::PiecewiseLinear { knots }).unwrap()
        }
    }
}

fn quantile_cdf_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let instances = 2000;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let d = random_distribution(&mut rng);
        let g = random_lipschitz_weighting(&mut rng);
        worst = worst.max((phi_quantile(&d, &g) - phi_cdf(&d, &g)).abs());
    }
    Verdict::new(
        worst <= 1e-9,
        format!("{instances} instances, max |diff| {worst:.2e}"),
    )
}

fn quantile_algebra() -> Verdict {
    const ETA: f64 = 0.125;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let instances = 2000;
    let mut failures = 0;
    let levels: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
    for _ in 0..instances {
        let d = random_distribution(&mut rng);
        let galois = d.grid().iter().all(|&z| d.quantile(d.cdf(z)).unwrap() <= z)
            && levels
                .iter()
                .all(|&t| d.cdf(d.quantile(t).unwrap()) >= t - 1e-12);

        // A = B − η + D with D ≥ 0 independent, so F_A(x) ≤ F_B(x + η).
        let b: Vec<f64> = (0..17).map(|_| rng.gen::<f64>()).collect();
        let extra: Vec<f64> = (0..rng.gen_range(1..5)).map(|_| rng.gen::<f64>()).collect();
        let (tb, te): (f64, f64) = (b.iter().sum(), extra.iter().sum());
        let mut a = vec![0.0; b.len() + extra.len()];
        for (i, pb) in b.iter().enumerate() {
            for (j, pd) in extra.iter().enumerate() {
                a[i + j] += pb * pd / (tb * te);
            }
        }
        let b: Vec<f64> = b.iter().map(|x| x / tb).collect();
        let dist_b = DiscreteDistribution::from_lattice(ETA, &b).unwrap();
        let up = DiscreteDistribution::from_lattice(ETA, &a).unwrap();
        let dist_a = DiscreteDistribution::new(
            up.grid().iter().map(|x| x - ETA).collect(),
            up.mass().to_vec(),
        )
        .unwrap();
        let transfer = levels
            .iter()
            .all(|&t| dist_a.quantile(t).unwrap() >= dist_b.quantile(t).unwrap() - ETA - 1e-12);
        if !(galois && transfer) {
            failures += 1;
        }
    }
    Verdict::new(
        failures == 0,
        format!("{instances} instances, {failures} violations"),
    )
}

fn history_policy(seed: u64, n_actions: usize) -> impl Fn(&History) -> Vec<f64> + Sync {
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

fn tilde_return_law() -> Verdict {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for m in make_test_mdps() {
        let aug = build_augmented(&m.mdp, m.mdp.eta()).unwrap();
        for seed in 0..50 {
            let pi = history_policy(seed, m.mdp.n_actions());
            let original = exact_return_distribution(&m.mdp, &pi).unwrap();
            let tilde = build_tilde_policy(&m.mdp, &pi).unwrap();
            let adapted = adapt_policy(&tilde, m.mdp.eta()).unwrap();
            let collapsed = exact_return_distribution(&m.mdp, &adapted).unwrap();
            let forward = evaluate_policy_distribution(&aug, &tilde).unwrap();
            worst = worst
                .max(original.cdf_distance(&collapsed))
                .max(original.cdf_distance(&forward));
            checked += 1;
        }
    }
    Verdict::new(
        worst <= 1e-10,
        format!("{checked} policies, max sup-distance {worst:.2e}"),
    )
}

fn discretization_loss() -> Verdict {
    let mut worst_slack = f64::INFINITY;
    let mut checked = 0;
    for m in make_test_mdps() {
        let fine = build_augmented(&m.mdp, m.mdp.eta()).unwrap();
        let horizon = m.mdp.horizon() as f64;
        for alpha in [0.25, 0.5, 1.0] {
            let g = WeightingFunction::cvar(alpha).unwrap();
            let (_, optimum) = plan_bruteforce(&fine, &g).unwrap();
            for eta in [0.5, 0.25, 0.125] {
                let coarse = build_augmented(&m.mdp, eta).unwrap();
                let plan = plan_cvar(&coarse, alpha).unwrap();
                let adapted = adapt_policy(&plan.policy, eta).unwrap();
                let achieved =
                    phi_quantile(&exact_return_distribution(&m.mdp, &adapted).unwrap(), &g);
                worst_slack = worst_slack.min(achieved - (optimum - horizon * eta));
                checked += 1;
            }
        }
    }
    Verdict::new(
        worst_slack >= -1e-9,
        format!(
            "{checked} (model, alpha, eta) cases, least margin over the bound {worst_slack:.4}"
        ),
    )
}

fn planner_oracle() -> Verdict {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for m in make_test_mdps() {
        let aug = build_augmented(&m.mdp, m.mdp.eta()).unwrap();
        for alpha in [0.1, 0.25, 0.5, 1.0] {
            let (_, brute) =
                plan_bruteforce(&aug, &WeightingFunction::cvar(alpha).unwrap()).unwrap();
            worst = worst.max((plan_cvar(&aug, alpha).unwrap().value - brute).abs());
            checked += 1;
        }
        let (_, mean) = plan_bruteforce(&aug, &WeightingFunction::expectation()).unwrap();
        worst = worst.max((plan_cvar(&aug, 1.0).unwrap().value - mean).abs());
    }
    Verdict::new(
        worst <= 1e-9,
        format!("{checked} (model, alpha) cases, max |dp - brute| {worst:.2e}"),
    )
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn risklab(args: &[&str], threads: Option<&str>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_risklab"));
    cmd.args(args);
    if let Some(n) = threads {
        cmd.env("RISKLAB_THREADS", n);
    }
    let out = cmd.output().expect("risklab runs");
    assert!(
        out.status.success(),
        "risklab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn runs<'a>(summary: &'a Value, label: &str) -> Vec<&'a Value> {
    summary["runs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["label"] == label)
        .collect()
}

fn field(runs: &[&Value], key: &str) -> Vec<f64> {
    runs.iter().map(|r| r[key].as_f64().unwrap()).collect()
}

fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn optimism_audit(scratch: &Path) -> Verdict {
    let out = scratch.join("audit");
    let config = repo_path("configs/frozen_lake_audit.json");
    risklab(
        &[
            "learn",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    let summary = read_summary(&out);
    let fractions = field(
        &runs(&summary, "cvar0.33 ucb"),
        "optimism_violation_fraction",
    );
    let delta = summary["config"]["delta"].as_f64().unwrap();
    let aggregate = fractions.iter().sum::<f64>() / fractions.len() as f64;
    Verdict::new(
        fractions.len() == 20 && aggregate <= delta,
        format!(
            "{} runs, violating fraction {aggregate:.4} (delta {delta})",
            fractions.len()
        ),
    )
}

fn convergence(summary: &Value) -> Verdict {
    let ucb = field(&runs(summary, "cvar0.33 ucb"), "late_match_fraction");
    let greedy = field(&runs(summary, "cvar0.33 greedy"), "late_match_fraction");
    let ucb_ok = ucb.iter().filter(|&&f| f >= 0.9).count();
    let greedy_fail = greedy.iter().filter(|&&f| f < 0.9).count();
    Verdict::new(
        ucb_ok >= 4 && greedy_fail >= 1,
        format!(
            "ucb {ucb_ok}/5 seeds on the optimal corridor {}; greedy fails on {greedy_fail} {}",
            fmt_list(&ucb),
            fmt_list(&greedy)
        ),
    )
}

fn sublinear(summary: &Value) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in ["0.33", "0.25"] {
        let rs = runs(summary, &format!("cvar{alpha} ucb"));
        let early = field(&rs, "early_mean_regret");
        let late = field(&rs, "late_mean_regret");
        let ok = early
            .iter()
            .zip(&late)
            .filter(|(e, l)| **l <= 0.5 * **e)
            .count();
        pass &= ok >= 4;
        parts.push(format!(
            "alpha {alpha}: {ok}/5 (late/early {})",
            fmt_list(
                &early
                    .iter()
                    .zip(&late)
                    .map(|(e, l)| l / e)
                    .collect::<Vec<_>>(),
            )
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

fn alpha_ordering(summary: &Value) -> Verdict {
    let totals = summary["totals"].as_array().unwrap();
    let median = |label: &str| {
        totals.iter().find(|t| t["label"] == label).unwrap()["median_total_regret"]
            .as_f64()
            .unwrap()
    };
    let medians: Vec<f64> = ["cvar0.25 ucb", "cvar0.33 ucb", "cvar0.4 ucb"]
        .iter()
        .map(|l| median(l))
        .collect();
    let inversions = medians.windows(2).filter(|w| w[1] > w[0]).count();
    Verdict::new(
        inversions <= 1,
        format!(
            "median cumulative regret over alpha 0.25, 0.33, 0.40: {} ({inversions} inversions)",
            fmt_list(&medians)
        ),
    )
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let other = fs::read_dir(b).unwrap().count();
    if other != names.len() {
        return Err(format!("{} vs {other} files", names.len()));
    }
    for name in &names {
        if fs::read(a.join(name)).unwrap() != fs::read(b.join(name)).unwrap() {
            return Err(format!("{} differs", name.to_string_lossy()));
        }
    }
    Ok(names.len())
}

fn determinism(scratch: &Path) -> Verdict {
    let plan_config = repo_path("configs/frozen_lake_plan.json");
    let mut compared = 0;
    for (run, threads) in [("a", "1"), ("b", "2")] {
        let plan_out = scratch.join(format!("plan_{run}"));
        risklab(
            &[
                "plan",
                "--config",
                plan_config.to_str().unwrap(),
                "--out",
                plan_out.to_str().unwrap(),
            ],
            Some(threads),
        );
        let learn_out = scratch.join(format!("learn_{run}"));
        risklab(
            &[
                "learn",
                "--alpha",
                "0.33,0.25",
                "--mode",
                "ucb,greedy",
                "--seeds",
                "1,2,3",
                "--episodes",
                "60",
                "--out",
                learn_out.to_str().unwrap(),
            ],
            Some(threads),
        );
    }
    for kind in ["plan", "learn"] {
        let (a, b) = (
            scratch.join(format!("{kind}_a")),
            scratch.join(format!("{kind}_b")),
        );
        match same_tree(&a, &b) {
            Ok(n) => compared += n,
            Err(e) => return Verdict::new(false, format!("{kind}: {e}")),
        }
    }
    Verdict::new(
        true,
        format!("{compared} files byte-identical across reruns with 1 and 2 threads"),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let mut stdout = std::io::stdout().lock();
    let mut failed = 0;
    let mut record = |id: usize, name: &str, started: Instant, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let secs = Duration::as_secs_f64(&started.elapsed());
        let _ = writeln!(stdout, "{tag} [{id:>2}] {name}: {} ({secs:.1}s)", v.detail);
        if !v.pass {
            failed += 1;
        }
    };

    let t = Instant::now();
    record(
        1,
        "quantile and CDF forms agree",
        t,
        quantile_cdf_identity(),
    );
    let t = Instant::now();
    record(2, "quantile algebra", t, quantile_algebra());
    let t = Instant::now();
    record(3, "tilde policy return law", t, tilde_return_law());
    let t = Instant::now();
    record(
        4,
        "discretization loss within T*eta",
        t,
        discretization_loss(),
    );
    let t = Instant::now();
    record(5, "planner equals exhaustive search", t, planner_oracle());
    let t = Instant::now();
    record(6, "optimism audit", t, optimism_audit(scratch.path()));

    let t = Instant::now();
    let learn_out = scratch.path().join("learn");
    let config = repo_path("configs/frozen_lake_learn.json");
    risklab(
        &[
            "learn",
            "--config",
            config.to_str().unwrap(),
            "--mode",
            "ucb,greedy",
            "--out",
            learn_out.to_str().unwrap(),
        ],
        None,
    );
    let summary = read_summary(&learn_out);
    record(7, "frozen-lake convergence", t, convergence(&summary));
    let t = Instant::now();
    record(8, "sublinear regret", t, sublinear(&summary));
    let t = Instant::now();
    record(9, "alpha ordering", t, alpha_ordering(&summary));
    let t = Instant::now();
    record(10, "determinism", t, determinism(scratch.path()));

    let _ = writeln!(stdout, "acceptance: {} of 10 criteria pass", 10 - failed);
    drop(stdout);
    if failed > 0 {
        std::process::exit(1);
    }
}
