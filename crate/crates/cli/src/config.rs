//! Run configuration files and environment resolution.

use std::fs;
use std::path::{Path, PathBuf};

use risklab::envs::{make_frozen_lake, make_test_mdps, FrozenLake, FrozenLakeSpec};
use risklab::learner::Mode;
use risklab::mdp::TabularMdp;
use risklab::riskdist::WeightingFunction;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    /// The frozen lake; `map_path` replaces `spec.map` with a file's text.
    FrozenLake {
        #[serde(default)]
        spec: FrozenLakeSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        map_path: Option<PathBuf>,
    },
    /// A model from the built-in test catalogue.
    Catalogue { name: String },
    /// A model stored as JSON.
    Mdp { path: PathBuf },
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::FrozenLake {
            spec: FrozenLakeSpec::default(),
            map_path: None,
        }
    }
}

/// Which policy `eval` scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    /// Walk one frozen-lake corridor (action index N=0, E=1, S=2, W=3).
    Corridor { action: usize },
    /// The same action at every step.
    Constant { action: usize },
    /// The `policy` field of a `plan.json`.
    Plan { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    /// Dynamic programming over the return threshold (CVaR and expectation).
    Dp,
    /// Exhaustive search over deterministic augmented policies.
    Bruteforce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighting: Option<WeightingFunction>,
    /// CVaR levels; each becomes its own run in `learn`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Planning lattice; defaults to the environment's reward lattice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_width_scale")]
    pub width_scale: f64,
    #[serde(default = "default_planner")]
    pub planner: PlannerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyConfig>,
    /// Whether `learn` draws regret curves.
    #[serde(default = "default_plots")]
    pub plots: bool,
}

fn default_episodes() -> u64 {
    1000
}

fn default_delta() -> f64 {
    0.1
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Ucb]
}

fn default_width_scale() -> f64 {
    1.0
}

fn default_planner() -> PlannerKind {
    PlannerKind::Dp
}

fn default_plots() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config takes every default")
    }
}

/// Command-line values that replace config entries when present.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub alphas: Option<Vec<f64>>,
    pub episodes: Option<u64>,
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub modes: Option<Vec<Mode>>,
}

/// A resolved environment ready for planning or learning.
pub struct Environment {
    pub name: String,
    pub mdp: TabularMdp,
    /// Multiplier from model units to reported units.
    pub scale: f64,
    pub lake: Option<FrozenLake>,
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.env {
            EnvConfig::FrozenLake {
                map_path: Some(p), ..
            } => fix(p),
            EnvConfig::Mdp { path } => fix(path),
            _ => {}
        }
        if let Some(PolicyConfig::Plan { path }) = &mut self.policy {
            fix(path);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.seeds {
            self.seeds = v.clone();
        }
        if let Some(v) = &o.alphas {
            self.alphas = v.clone();
        }
        if let Some(v) = o.episodes {
            self.episodes = v;
        }
        if let Some(v) = o.delta {
            self.delta = v;
        }
        if o.eta.is_some() {
            self.eta = o.eta;
        }
        if let Some(v) = &o.modes {
            self.modes = v.clone();
        }
    }

    /// The weighting for single-objective commands: an explicit weighting,
    /// else CVaR at the only configured level, else expectation.
    pub fn single_weighting(&self) -> CliResult<WeightingFunction> {
        match (&self.weighting, self.alphas.as_slice()) {
            (Some(w), []) => Ok(w.clone()),
            (None, []) => Ok(WeightingFunction::expectation()),
            (None, [alpha]) => Ok(WeightingFunction::cvar(*alpha)?),
            (Some(_), _) => Err(CliError::Usage(
                "give either a weighting or alpha levels, not both".into(),
            )),
            (None, _) => Err(CliError::Usage(
                "this command takes a single alpha level".into(),
            )),
        }
    }

    /// Objectives swept by `learn`.
    pub fn sweep_weightings(&self) -> CliResult<Vec<WeightingFunction>> {
        if self.alphas.is_empty() {
            return Ok(vec![self.single_weighting()?]);
        }
        if self.weighting.is_some() {
            return Err(CliError::Usage(
                "give either a weighting or alpha levels, not both".into(),
            ));
        }
        self.alphas
            .iter()
            .map(|&a| Ok(WeightingFunction::cvar(a)?))
            .collect()
    }

    pub fn environment(&self) -> CliResult<Environment> {
        match &self.env {
            EnvConfig::FrozenLake { spec, map_path } => {
                let mut spec = spec.clone();
                if let Some(path) = map_path {
                    spec.map = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                }
                let lake = make_frozen_lake(&spec)?;
                Ok(Environment {
                    name: "frozen_lake".into(),
                    mdp: lake.mdp.clone(),
                    scale: lake.scale,
                    lake: Some(lake),
                })
            }
            EnvConfig::Catalogue { name } => {
                let found = make_test_mdps().into_iter().find(|m| m.name == name);
                let m = found
                    .ok_or_else(|| CliError::Usage(format!("no catalogue model named {name:?}")))?;
                Ok(Environment {
                    name: m.name.into(),
                    mdp: m.mdp,
                    scale: 1.0,
                    lake: None,
                })
            }
            EnvConfig::Mdp { path } => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let mdp: TabularMdp =
                    serde_json::from_str(&text).map_err(|e| CliError::Config {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                Ok(Environment {
                    name: path
                        .file_stem()
                        .map_or("mdp".into(), |s| s.to_string_lossy().into_owned()),
                    mdp,
                    scale: 1.0,
                    lake: None,
                })
            }
        }
    }
}
