//! 8x8 lava grid worlds and the Q-learning behavior agent whose replay
//! buffer becomes an offline dataset.
//!
//! Layouts are plain text, one row per line: `.` free, `L` lava,
//! `S` start, `G` goal. Actions are 0 = up, 1 = down, 2 = left,
//! 3 = right; a move into the border leaves the agent in place.
//!
//! Rewards: -0.01 per step, +1 for entering the goal, -1 for entering
//! lava. Goal and lava are absorbing with zero reward.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::dataset::{DatasetMeta, OfflineDataset, Transition};
use crate::error::{Error, Result};
use crate::mdp::{absorbing_states, argmax, PolicyTable, TabularMdp};
use crate::sampling::{categorical, seeded};

pub const GRID_SIZE: usize = 8;
pub const NUM_ACTIONS: usize = 4;
pub const STEP_REWARD: f64 = -0.01;
pub const GOAL_REWARD: f64 = 1.0;
pub const LAVA_REWARD: f64 = -1.0;
pub const GRID_GAMMA: f64 = 0.99;
pub const GRID_R_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridKind {
    Empty,
    Bridge,
    Cliff,
    ZigZag,
}

impl GridKind {
    pub const ALL: [GridKind; 4] = [GridKind::Empty, GridKind::Bridge, GridKind::Cliff, GridKind::ZigZag];
    pub const LAVA: [GridKind; 3] = [GridKind::Bridge, GridKind::Cliff, GridKind::ZigZag];

    pub fn name(self) -> &'static str {
        match self {
            GridKind::Empty => "empty",
            GridKind::Bridge => "bridge",
            GridKind::Cliff => "cliff",
            GridKind::ZigZag => "zigzag",
        }
    }

    pub fn env_id(self) -> String {
        format!("grid/{}", self.name())
    }

    fn layout_text(self) -> &'static str {
        match self {
            GridKind::Empty => include_str!("../layouts/empty.txt"),
            GridKind::Bridge => include_str!("../layouts/bridge.txt"),
            GridKind::Cliff => include_str!("../layouts/cliff.txt"),
            GridKind::ZigZag => include_str!("../layouts/zigzag.txt"),
        }
    }
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.strip_prefix("grid/").unwrap_or(s);
        match name.to_ascii_lowercase().as_str() {
            "empty" => Ok(GridKind::Empty),
            "bridge" => Ok(GridKind::Bridge),
            "cliff" => Ok(GridKind::Cliff),
            "zigzag" => Ok(GridKind::ZigZag),
            _ => Err(Error::invalid(format!("unknown grid layout '{s}'"))),
        }
    }
}

/// Cell as `(row, col)`, row 0 at the top.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub kind: GridKind,
    pub width: usize,
    pub height: usize,
    pub lava_cells: BTreeSet<Cell>,
    pub start: Cell,
    pub goal: Cell,
}

impl GridLayout {
    /// One of the four shipped layouts.
    pub fn builtin(kind: GridKind) -> Self {
        Self::parse(kind, kind.layout_text()).expect("shipped layouts are valid")
    }

    pub fn parse(kind: GridKind, text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if rows.len() != GRID_SIZE {
            return Err(Error::invalid(format!("layout needs {GRID_SIZE} rows, found {}", rows.len())));
        }
        let mut lava = BTreeSet::new();
        let (mut start, mut goal) = (None, None);
        for (r, row) in rows.iter().enumerate() {
            let chars: Vec<char> = row.chars().collect();
            if chars.len() != GRID_SIZE {
                return Err(Error::Parse { line: r + 1, msg: format!("row has {} cells, expected {GRID_SIZE}", chars.len()) });
            }
            for (c, ch) in chars.into_iter().enumerate() {
                match ch {
                    '.' => {}
                    'L' => {
                        lava.insert((r, c));
                    }
                    'S' if start.is_none() => start = Some((r, c)),
                    'G' if goal.is_none() => goal = Some((r, c)),
                    'S' | 'G' => return Err(Error::Parse { line: r + 1, msg: format!("duplicate '{ch}'") }),
                    other => return Err(Error::Parse { line: r + 1, msg: format!("unknown cell '{other}'") }),
                }
            }
        }
        let layout = Self {
            kind,
            width: GRID_SIZE,
            height: GRID_SIZE,
            lava_cells: lava,
            start: start.ok_or_else(|| Error::invalid("layout has no start cell"))?,
            goal: goal.ok_or_else(|| Error::invalid("layout has no goal cell"))?,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width != GRID_SIZE || self.height != GRID_SIZE {
            return Err(Error::invalid("grid must be 8x8"));
        }
        let inside = |&(r, c): &Cell| r < self.height && c < self.width;
        if !inside(&self.start) || !inside(&self.goal) || !self.lava_cells.iter().all(inside) {
            return Err(Error::invalid("cell outside the grid"));
        }
        if self.start == self.goal {
            return Err(Error::invalid("start and goal coincide"));
        }
        if self.lava_cells.contains(&self.start) || self.lava_cells.contains(&self.goal) {
            return Err(Error::invalid("start or goal lies in lava"));
        }
        Ok(())
    }

    pub fn state_of(&self, (r, c): Cell) -> usize {
        r * self.width + c
    }

    pub fn cell_of(&self, s: usize) -> Cell {
        (s / self.width, s % self.width)
    }

    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    /// Goal and lava states.
    pub fn terminal_mask(&self) -> Vec<bool> {
        (0..self.num_states())
            .map(|s| {
                let cell = self.cell_of(s);
                cell == self.goal || self.lava_cells.contains(&cell)
            })
            .collect()
    }

    /// Renders back to the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = (r, c);
                out.push(if cell == self.start {
                    'S'
                } else if cell == self.goal {
                    'G'
                } else if self.lava_cells.contains(&cell) {
                    'L'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    fn step(&self, (r, c): Cell, action: usize) -> Cell {
        match action {
            0 => (r.saturating_sub(1), c),
            1 => ((r + 1).min(self.height - 1), c),
            2 => (r, c.saturating_sub(1)),
            _ => (r, (c + 1).min(self.width - 1)),
        }
    }
}

/// Deterministic 64-state, 4-action MDP for a layout, `gamma = 0.99`.
pub fn build_gridworld(layout: &GridLayout) -> Result<TabularMdp> {
    layout.validate()?;
    let ns = layout.num_states();
    let terminal = layout.terminal_mask();
    let mut transition = vec![0.0; ns * NUM_ACTIONS * ns];
    let mut reward = vec![0.0; ns * NUM_ACTIONS];
    for s in 0..ns {
        for a in 0..NUM_ACTIONS {
            let base = (s * NUM_ACTIONS + a) * ns;
            if terminal[s] {
                transition[base + s] = 1.0;
                continue;
            }
            let next_cell = layout.step(layout.cell_of(s), a);
            let next = layout.state_of(next_cell);
            transition[base + next] = 1.0;
            reward[s * NUM_ACTIONS + a] = if next_cell == layout.goal {
                GOAL_REWARD
            } else if layout.lava_cells.contains(&next_cell) {
                LAVA_REWARD
            } else {
                STEP_REWARD
            };
        }
    }
    let mut d0 = vec![0.0; ns];
    d0[layout.state_of(layout.start)] = 1.0;
    TabularMdp::from_flat(ns, NUM_ACTIONS, transition, reward, GRID_R_MAX, GRID_GAMMA, d0)
}

/// Q-learning settings for the behavior agent. None of these values come
/// from a reference setup; they are chosen to give desk-scale datasets of
/// a few times 10^4 transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTrainConfig {
    pub episodes: usize,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub max_episode_steps: usize,
    /// Training continues past `episodes` until the buffer holds at
    /// least this many transitions.
    pub min_transitions: usize,
    pub seed: u64,
}

impl Default for BehaviorTrainConfig {
    fn default() -> Self {
        Self { episodes: 1000, epsilon: 0.3, learning_rate: 0.5, max_episode_steps: 100, min_transitions: 0, seed: 0 }
    }
}

impl BehaviorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid("epsilon must lie in [0, 1]"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate must lie in (0, 1]"));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::invalid("max_episode_steps must be positive"));
        }
        Ok(())
    }
}

/// Output of a behavior training run.
#[derive(Debug, Clone)]
pub struct BehaviorRun {
    /// Greedy policy of the final Q-table.
    pub greedy: PolicyTable,
    /// Every transition experienced during training, in order.
    pub dataset: OfflineDataset,
    pub q_table: Vec<f64>,
}

impl BehaviorRun {
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.greedy.num_states()).map(|s| self.greedy.mode_action(s)).collect()
    }

    /// `(1 - eps)`-greedy mixture over the final greedy policy.
    pub fn epsilon_greedy(&self, epsilon: f64) -> Result<PolicyTable> {
        PolicyTable::epsilon_greedy(&self.greedy_actions(), self.greedy.num_actions(), epsilon)
    }
}

/// Tabular epsilon-greedy Q-learning; the replay buffer is the dataset.
pub fn train_behavior(mdp: &TabularMdp, cfg: &BehaviorTrainConfig) -> Result<BehaviorRun> {
    cfg.validate()?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let absorbing = absorbing_states(mdp);
    let gamma = mdp.gamma();
    if cfg.min_transitions > 0 && mdp.initial_dist().iter().zip(&absorbing).all(|(&p, &abs)| p == 0.0 || abs) {
        return Err(Error::invalid("min_transitions is unreachable: every start state is absorbing"));
    }
    let mut rng = seeded(cfg.seed);
    let mut q = vec![0.0; ns * na];
    let mut buffer = Vec::new();
    let mut episode = 0;
    while episode < cfg.episodes || buffer.len() < cfg.min_transitions {
        episode += 1;
        let mut s = categorical(mdp.initial_dist(), &mut rng);
        for _ in 0..cfg.max_episode_steps {
            if absorbing[s] {
                break;
            }
            let a = if rng.random::<f64>() < cfg.epsilon {
                rng.random_range(0..na)
            } else {
                argmax(&q[s * na..(s + 1) * na])
            };
            let next = categorical(mdp.row(s, a), &mut rng);
            let r = mdp.reward(s, a);
            buffer.push(Transition { state: s, action: a, reward: r, next_state: next });
            let bootstrap = if absorbing[next] {
                0.0
            } else {
                q[next * na..(next + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let idx = s * na + a;
            q[idx] += cfg.learning_rate * (r + gamma * bootstrap - q[idx]);
            s = next;
        }
    }
    let actions: Vec<usize> = (0..ns).map(|s| argmax(&q[s * na..(s + 1) * na])).collect();
    let greedy = PolicyTable::deterministic(&actions, na)?;
    let meta = DatasetMeta { env_id: String::new(), seed: cfg.seed, generator: format!("q_learning_eps{}", cfg.epsilon) };
    let dataset = OfflineDataset::new(ns, na, buffer, meta)?;
    Ok(BehaviorRun { greedy, dataset, q_table: q })
}
