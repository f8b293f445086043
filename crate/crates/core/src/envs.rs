//! Built-in environments: a four-corridor frozen lake and a catalogue of
//! small models that the exhaustive oracles can handle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{steps_per_unit, MarkovPolicy, TabularMdp};

/// Nine-by-nine cross. Start in the middle; corridors lead N, E, S, W to
/// goals 1..4 through 3, 2, 1 and 0 ice cells.
pub const DEFAULT_MAP: &str = "\
HHHH1HHHH
HHHH~HHHH
HHHH~HHHH
HHHH~HHHH
4...S.~~2
HHHH.HHHH
HHHH~HHHH
HHHH.HHHH
HHHH3HHHH
";

/// Moves in grid order: up, right, down, left.
pub const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];
pub const ACTION_NAMES: [&str; 4] = ["N", "E", "S", "W"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrozenLakeSpec {
    pub map: String,
    /// Probability of falling through when stepping onto ice.
    pub slip: f64,
    /// Terminal reward of goal `i` is `rewards[i - 1]`.
    pub rewards: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub eta: f64,
}

impl Default for FrozenLakeSpec {
    fn default() -> Self {
        FrozenLakeSpec {
            map: DEFAULT_MAP.to_string(),
            slip: 0.1,
            rewards: vec![6.0, 4.0, 2.0, 1.0],
            horizon: 6,
            eta: 1.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Start,
    Safe,
    Ice,
    Hole,
    Goal(usize),
}

/// A frozen lake compiled to a tabular model.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLake {
    pub mdp: TabularMdp,
    /// Rewards are divided by this to lie in `[0, 1]`.
    pub scale: f64,
    pub start: usize,
    /// The shared absorbing state for every hole.
    pub hole: usize,
    /// `goals[i]` is the state of goal `i + 1`.
    pub goals: Vec<usize>,
    /// Grid coordinates of each non-hole state.
    pub cells: Vec<(usize, usize)>,
}

fn parse_map(map: &str) -> Result<Vec<Vec<Cell>>> {
    let mut rows = Vec::new();
    let mut starts = 0;
    for (line_no, line) in map.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, ch) in line.chars().enumerate() {
            let cell = match ch {
                'S' => {
                    starts += 1;
                    if starts > 1 {
                        return Err(Error::Parse {
                            line: line_no + 1,
                            column: col + 1,
                            message: "second start cell".into(),
                        });
                    }
                    Cell::Start
                }
                '.' => Cell::Safe,
                '~' => Cell::Ice,
                'H' => Cell::Hole,
                d if d.is_ascii_digit() && d != '0' => Cell::Goal(d as usize - '1' as usize),
                other => {
                    return Err(Error::Parse {
                        line: line_no + 1,
                        column: col + 1,
                        message: format!("unknown cell {other:?}"),
                    })
                }
            };
            row.push(cell);
        }
        if let Some(first) = rows.first() {
            let width = Vec::len(first);
            if row.len() != width {
                return Err(Error::Parse {
                    line: line_no + 1,
                    column: row.len().min(width) + 1,
                    message: format!("row has {} cells, expected {width}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    if starts == 0 {
        return Err(Error::Parse {
            line: rows.len().max(1),
            column: 1,
            message: "map has no start cell".into(),
        });
    }
    Ok(rows)
}

/// Compiles a frozen-lake map into a tabular model.
///
/// Every non-hole cell is a state, and all holes share one absorbing state.
/// Stepping onto ice succeeds with probability `1 − slip` and otherwise
/// drops into the hole; stepping onto a hole always does. Moves off the map
/// leave the agent in place. Entering goal `i` pays `rewards[i−1] / scale`
/// once; goals and the hole absorb with zero reward.
pub fn make_frozen_lake(spec: &FrozenLakeSpec) -> Result<FrozenLake> {
    if !(0.0..=1.0).contains(&spec.slip) {
        return Err(Error::domain(format!("slip = {} not in [0, 1]", spec.slip)));
    }
    let per_unit = steps_per_unit(spec.eta)?;
    let grid = parse_map(&spec.map)?;
    let scale = spec.rewards.iter().cloned().fold(0.0, f64::max);
    if spec.rewards.is_empty() || !(scale > 0.0) || spec.rewards.iter().any(|r| *r < 0.0) {
        return Err(Error::domain(
            "goal rewards must be nonnegative with a positive maximum",
        ));
    }
    let mut reward_index = Vec::with_capacity(spec.rewards.len());
    for r in &spec.rewards {
        let x = r / scale * per_unit as f64;
        if (x - x.round()).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "goal reward {r} is not on the eta lattice after scaling by {scale}"
            )));
        }
        reward_index.push(x.round() as usize);
    }

    let height = grid.len();
    let width = grid[0].len();
    let mut index = vec![vec![usize::MAX; width]; height];
    let mut cells = Vec::new();
    let mut goals = vec![usize::MAX; spec.rewards.len()];
    let mut start = 0;
    for (r, row) in grid.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            if *cell == Cell::Hole {
                continue;
            }
            index[r][c] = cells.len();
            match cell {
                Cell::Start => start = cells.len(),
                Cell::Goal(g) => {
                    if *g >= goals.len() {
                        return Err(Error::Parse {
                            line: r + 1,
                            column: c + 1,
                            message: format!("goal {} has no reward", g + 1),
                        });
                    }
                    goals[*g] = cells.len();
                }
                _ => {}
            }
            cells.push((r, c));
        }
    }
    let hole = cells.len();
    let n_states = hole + 1;
    let n_actions = MOVES.len();

    let mut trans = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut rewards = vec![vec![vec![0.0; per_unit + 1]; n_actions]; n_states];
    for (s, &(r, c)) in cells.iter().enumerate() {
        let here = grid[r][c];
        for (a, (dr, dc)) in MOVES.iter().enumerate() {
            let mut reward = 0;
            if matches!(here, Cell::Goal(_)) {
                trans[s][a][s] = 1.0;
            } else {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                    trans[s][a][s] = 1.0;
                } else {
                    let (nr, nc) = (nr as usize, nc as usize);
                    match grid[nr][nc] {
                        Cell::Hole => trans[s][a][hole] = 1.0,
                        Cell::Ice => {
                            trans[s][a][index[nr][nc]] += 1.0 - spec.slip;
                            trans[s][a][hole] += spec.slip;
                        }
                        Cell::Goal(g) => {
                            trans[s][a][index[nr][nc]] = 1.0;
                            reward = reward_index[g];
                        }
                        Cell::Start | Cell::Safe => trans[s][a][index[nr][nc]] = 1.0,
                    }
                }
            }
            rewards[s][a][reward] = 1.0;
        }
    }
    for a in 0..n_actions {
        trans[hole][a][hole] = 1.0;
        rewards[hole][a][0] = 1.0;
    }
    let mut init = vec![0.0; n_states];
    init[start] = 1.0;
    let mdp = TabularMdp::new(spec.horizon, spec.eta, init, trans, rewards)?;
    Ok(FrozenLake {
        mdp,
        scale,
        start,
        hole,
        goals,
        cells,
    })
}

impl FrozenLake {
    /// Always move in direction `action`.
    pub fn corridor_policy(&self, action: usize) -> MarkovPolicy {
        MarkovPolicy::constant(
            action,
            self.mdp.horizon(),
            self.mdp.n_states(),
            self.mdp.n_actions(),
        )
    }
}

/// A named oracle-scale model.
#[derive(Debug, Clone, PartialEq)]
pub struct TestMdp {
    pub name: &'static str,
    pub mdp: TabularMdp,
}

/// Reward lattice of the catalogue: 1/24 is a multiple of 1/2, 1/4 and 1/8,
/// and several atoms sit between the points of those coarser lattices.
pub const CATALOGUE_ETA: f64 = 1.0 / 24.0;

fn reward(atoms: &[(usize, f64)]) -> Vec<f64> {
    let mut h = vec![0.0; 25];
    for &(i, p) in atoms {
        h[i] += p;
    }
    h
}

fn build(
    name: &'static str,
    horizon: usize,
    init: Vec<f64>,
    trans: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<Vec<f64>>>,
) -> TestMdp {
    TestMdp {
        name,
        mdp: TabularMdp::new(horizon, CATALOGUE_ETA, init, trans, rewards)
            .expect("catalogue model is valid"),
    }
}

/// Fixed catalogue of small models (at most 3 states, 2 actions, T = 3).
pub fn make_test_mdps() -> Vec<TestMdp> {
    vec![
        // One pull: a fair coin over {0, 1} against a sure 10/24.
        build(
            "coin_bandit",
            1,
            vec![1.0],
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![reward(&[(0, 0.5), (24, 0.5)]), reward(&[(10, 1.0)])]],
        ),
        // Two pulls of a skewed arm against a sure 11/24.
        build(
            "repeated_bandit",
            2,
            vec![1.0],
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![reward(&[(5, 0.3), (19, 0.7)]), reward(&[(11, 1.0)])]],
        ),
        // Risky branch (state 1) against a safe branch (state 2).
        build(
            "risk_safe_fork",
            2,
            vec![1.0, 0.0, 0.0],
            vec![
                vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
                vec![vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]],
                vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
            ],
            vec![
                vec![reward(&[(0, 1.0)]), reward(&[(0, 1.0)])],
                vec![
                    reward(&[(0, 0.3), (24, 0.7)]),
                    reward(&[(7, 0.5), (17, 0.5)]),
                ],
                vec![reward(&[(13, 1.0)]), reward(&[(13, 1.0)])],
            ],
        ),
        // Single-action chain with noisy rewards.
        build(
            "noisy_chain",
            3,
            vec![1.0, 0.0, 0.0],
            vec![
                vec![vec![0.0, 1.0, 0.0]],
                vec![vec![0.0, 0.0, 1.0]],
                vec![vec![0.0, 0.0, 1.0]],
            ],
            vec![
                vec![reward(&[(5, 0.5), (7, 0.5)])],
                vec![reward(&[(13, 0.4), (3, 0.6)])],
                vec![reward(&[(24, 0.2), (9, 0.8)])],
            ],
        ),
        // Two states with stochastic moves; action 1 gambles.
        build(
            "slippery_pair",
            3,
            vec![0.6, 0.4],
            vec![
                vec![vec![0.7, 0.3], vec![0.2, 0.8]],
                vec![vec![0.0, 1.0], vec![0.5, 0.5]],
            ],
            vec![
                vec![reward(&[(9, 1.0)]), reward(&[(0, 0.5), (24, 0.5)])],
                vec![reward(&[(9, 1.0)]), reward(&[(0, 0.6), (24, 0.4)])],
            ],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::exact_return_distribution;

    #[test]
    fn default_lake_shape() {
        let lake = make_frozen_lake(&FrozenLakeSpec::default()).unwrap();
        // 17 cross cells plus the hole.
        assert_eq!(lake.mdp.n_states(), 18);
        assert_eq!(lake.mdp.n_actions(), 4);
        assert_eq!(lake.scale, 6.0);
        assert_eq!(lake.cells[lake.start], (4, 4));
    }

    #[test]
    fn corridor_returns() {
        let lake = make_frozen_lake(&FrozenLakeSpec::default()).unwrap();
        let expected = [(0.729, 6.0), (0.81, 4.0), (0.9, 2.0), (1.0, 1.0)];
        for (action, (p, ret)) in expected.iter().enumerate() {
            let d = exact_return_distribution(&lake.mdp, &lake.corridor_policy(action)).unwrap();
            let success = 1.0 - d.cdf(ret / lake.scale - 1e-9);
            assert!((success - p).abs() < 1e-12, "corridor {action}: {success}");
            assert!((d.max() * lake.scale - ret).abs() < 1e-12);
            if *p < 1.0 {
                assert!((d.cdf(0.0) - (1.0 - p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let spec = |map: &str| FrozenLakeSpec {
            map: map.into(),
            ..FrozenLakeSpec::default()
        };
        match make_frozen_lake(&spec("S.1\n.x.\n")) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        match make_frozen_lake(&spec("S.1\n..\n")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(make_frozen_lake(&spec("..1\n...\n")).is_err());
        assert!(make_frozen_lake(&spec("S.1\nS..\n")).is_err());
        assert!(make_frozen_lake(&spec("S.9\n")).is_err());
    }

    #[test]
    fn rewards_must_fit_lattice() {
        let spec = FrozenLakeSpec {
            rewards: vec![6.0, 4.0, 2.5, 1.0],
            ..FrozenLakeSpec::default()
        };
        assert!(matches!(make_frozen_lake(&spec), Err(Error::Domain(_))));
    }

    #[test]
    fn catalogue_is_small() {
        let cat = make_test_mdps();
        assert!(!cat.is_empty());
        for m in &cat {
            assert!(m.mdp.n_states() <= 3 && m.mdp.n_actions() <= 2 && m.mdp.horizon() <= 3);
        }
    }
}
