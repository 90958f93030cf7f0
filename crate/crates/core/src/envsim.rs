//! ChainWorld: a seedable K-stage gridworld standing in for a long-horizon
//! manipulation suite.
//!
//! The agent moves on a square grid and must toggle its gripper on each
//! stage target in order. The simulator exposes oracle progress (stage count
//! plus a shaping term from the closest approach to the current target) and
//! a rule-based success test that can be made stricter than progress to
//! reproduce success-criterion mismatch.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::trajectory::{Step, Trajectory};
use crate::{Error, Result};

/// Fraction of a stage interval that intra-stage shaping may cover. Kept
/// well below one so that no state short of completing the final stage can
/// score above the default termination threshold of 95 (for K <= 9).
pub const SHAPING_CAP: f64 = 0.5;

/// Number of distinct action tokens the simulator understands.
pub const NUM_ACTIONS: usize = 6;

/// Grid coordinates, `row` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: i32,
    pub col: i32,
}

impl Cell {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    fn in_grid(self, grid_size: u32) -> bool {
        let g = grid_size as i32;
        (0..g).contains(&self.row) && (0..g).contains(&self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Toggle = 4,
    Noop = 5,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Toggle,
        Action::Noop,
    ];

    pub fn from_token(token: usize) -> Option<Action> {
        Self::ALL.get(token).copied()
    }

    pub fn token(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub grid_size: u32,
    pub num_stages: u32,
    pub max_horizon_cap: u32,
    pub mismatch_enabled: bool,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_size: 8,
            num_stages: 3,
            max_horizon_cap: 512,
            mismatch_enabled: false,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_stages < 1 {
            return Err(Error::Config("env.num_stages must be >= 1".into()));
        }
        if self.grid_size < 4 {
            return Err(Error::Config("env.grid_size must be >= 4".into()));
        }
        if self.max_horizon_cap < 16 * self.num_stages {
            return Err(Error::Config(format!(
                "env.max_horizon_cap must be >= 16 * env.num_stages = {}",
                16 * self.num_stages
            )));
        }
        Ok(())
    }

    /// Cell that must be occupied for success when mismatch is enabled.
    pub fn terminal_cell(&self, task: &TaskSpec) -> Cell {
        let g = self.grid_size as i32;
        let corner = Cell::new(0, g - 1);
        if task.stage_targets.last() == Some(&corner) {
            Cell::new(g - 1, g - 1)
        } else {
            corner
        }
    }
}

/// Goal description: ordered stage targets plus the candidate start cells
/// that `reset` draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub instruction: String,
    pub stage_targets: Vec<Cell>,
    pub start_cells: Vec<Cell>,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            task_id: "chain".into(),
            instruction: String::new(),
            stage_targets: Vec::new(),
            start_cells: Vec::new(),
        }
    }
}

impl TaskSpec {
    /// The standard chain layout: targets spaced evenly along the
    /// second-to-last row from left to right, ending in the last column.
    /// Episodes start anywhere in the leftmost column.
    pub fn chain(config: &EnvConfig) -> Self {
        let g = config.grid_size as i32;
        let k = config.num_stages as i32;
        let stage_targets = (0..k)
            .map(|i| {
                // round((i + 1) * (g - 1) / k)
                let col = ((2 * (i + 1) * (g - 1) + k) / (2 * k)).min(g - 1);
                Cell::new(g - 2, col)
            })
            .collect();
        let start_cells = (0..g).map(|row| Cell::new(row, 0)).collect();
        Self {
            task_id: format!("chain-{}x{}-k{}", g, g, k),
            instruction: format!("grip the {} markers in order", k),
            stage_targets,
            start_cells,
        }
    }

    /// Fills in a chain layout for any empty field.
    pub fn materialize(mut self, config: &EnvConfig) -> Self {
        let chain = Self::chain(config);
        if self.stage_targets.is_empty() {
            self.stage_targets = chain.stage_targets;
        }
        if self.start_cells.is_empty() {
            self.start_cells = chain.start_cells;
        }
        if self.instruction.is_empty() {
            self.instruction = chain.instruction;
        }
        if self.task_id.is_empty() {
            self.task_id = chain.task_id;
        }
        self
    }
}

/// Full simulator snapshot; doubles as the frame the critic compares.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub agent_pos: Cell,
    pub stage_index: usize,
    pub item_flags: Vec<bool>,
    pub gripper: bool,
    pub step_index: u32,
    /// Smallest Manhattan distance to the current stage target since the
    /// stage began.
    pub closest_approach: u32,
    /// Manhattan distance to the current stage target when the stage began.
    pub stage_start_distance: u32,
}

/// A validated (config, task) pair. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    config: EnvConfig,
    task: TaskSpec,
    terminal: Cell,
}

impl World {
    pub fn new(config: EnvConfig, task: TaskSpec) -> Result<Self> {
        config.validate()?;
        if task.stage_targets.len() != config.num_stages as usize {
            return Err(Error::Config(format!(
                "task.stage_targets has {} entries but env.num_stages = {}",
                task.stage_targets.len(),
                config.num_stages
            )));
        }
        if let Some(c) = task
            .stage_targets
            .iter()
            .find(|c| !c.in_grid(config.grid_size))
        {
            return Err(Error::Config(format!(
                "task.stage_targets: {:?} lies outside the {}x{} grid",
                c, config.grid_size, config.grid_size
            )));
        }
        if task.start_cells.is_empty() {
            return Err(Error::Config("task.start_cells must not be empty".into()));
        }
        if let Some(c) = task
            .start_cells
            .iter()
            .find(|c| !c.in_grid(config.grid_size))
        {
            return Err(Error::Config(format!(
                "task.start_cells: {:?} lies outside the grid",
                c
            )));
        }
        let terminal = config.terminal_cell(&task);
        Ok(Self {
            config,
            task,
            terminal,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn num_stages(&self) -> usize {
        self.config.num_stages as usize
    }

    pub fn terminal_cell(&self) -> Cell {
        self.terminal
    }

    /// Same layout with the mismatch rule switched on or off.
    pub fn with_mismatch(&self, enabled: bool) -> World {
        let mut w = self.clone();
        w.config.mismatch_enabled = enabled;
        w
    }

    /// Same layout truncated to a lower step ceiling, e.g. a curriculum
    /// horizon. The minimum-cap invariant applies to the full task only.
    pub fn with_cap(&self, cap: u32) -> Result<World> {
        if cap == 0 || cap > self.config.max_horizon_cap {
            return Err(Error::Argument(format!(
                "truncated cap {} must lie in [1, {}]",
                cap, self.config.max_horizon_cap
            )));
        }
        let mut w = self.clone();
        w.config.max_horizon_cap = cap;
        Ok(w)
    }

    fn distance_to_next(&self, pos: Cell, stage: usize) -> u32 {
        self.task
            .stage_targets
            .get(stage)
            .map_or(0, |t| pos.manhattan(*t))
    }

    pub fn reset(&self, episode_seed: u64) -> Episode {
        let mut rng = seed::rng(seed::derive(self.config.seed, "reset", episode_seed));
        let start = self.task.start_cells[rng.random_range(0..self.task.start_cells.len())];
        self.reset_at(start)
    }

    /// Resets with an explicit start cell.
    pub fn reset_at(&self, start: Cell) -> Episode {
        let obs = Observation {
            agent_pos: start,
            stage_index: 0,
            item_flags: vec![false; self.num_stages()],
            gripper: false,
            step_index: 0,
            closest_approach: self.distance_to_next(start, 0),
            stage_start_distance: self.distance_to_next(start, 0),
        };
        Episode {
            world: self.clone(),
            obs,
        }
    }

    /// Stage fraction plus closest-approach shaping, in [0, 100]. Shaping is
    /// the fraction of the stage's starting distance closed so far, so every
    /// stage (and every reset) begins exactly on its stage boundary.
    pub fn oracle_progress(&self, obs: &Observation) -> f64 {
        let k = self.num_stages();
        if obs.stage_index >= k {
            return 100.0;
        }
        let interval = 100.0 / k as f64;
        let closeness = if obs.stage_start_distance == 0 {
            0.0
        } else {
            1.0 - f64::from(obs.closest_approach.min(obs.stage_start_distance))
                / f64::from(obs.stage_start_distance)
        };
        interval * obs.stage_index as f64 + interval * SHAPING_CAP * closeness
    }

    pub fn oracle_success(&self, obs: &Observation) -> bool {
        let all_done = obs.item_flags.iter().all(|&f| f);
        all_done && (!self.config.mismatch_enabled || obs.agent_pos == self.terminal)
    }

    /// Greedy shortest-path demonstration. Among the moves that reduce the
    /// distance to the current target one is picked at random (seeded), so
    /// different seeds yield differently ordered but equally short paths.
    pub fn scripted_expert(&self, episode_seed: u64, chunk_len: usize) -> Result<Trajectory> {
        let actions = self.expert_actions(episode_seed)?;
        let mut episode = self.with_mismatch(false).reset(episode_seed);
        let mut steps = Vec::new();
        for chunk in actions.chunks(chunk_len.max(1)) {
            let mut tokens: Vec<usize> = chunk.iter().map(|a| a.token()).collect();
            tokens.resize(chunk_len.max(1), Action::Noop.token());
            let obs = episode.observation().clone();
            episode.step(&tokens)?;
            steps.push(Step {
                observation: obs,
                tokens,
                log_prob: 0.0,
            });
        }
        let final_observation = episode.observation().clone();
        debug_assert!(self.with_mismatch(false).oracle_success(&final_observation));
        Ok(Trajectory::new(steps, final_observation))
    }

    /// The expert's action sequence, one token per timestep.
    pub fn expert_actions(&self, episode_seed: u64) -> Result<Vec<Action>> {
        let mut rng = seed::rng(seed::derive(self.config.seed, "expert", episode_seed));
        let start = self.reset(episode_seed).obs.agent_pos;
        let mut pos = start;
        let mut actions = Vec::new();
        for target in &self.task.stage_targets {
            while pos != *target {
                let mut options = [Action::Noop; 2];
                let mut n = 0;
                if target.row < pos.row {
                    options[n] = Action::Up;
                    n += 1;
                } else if target.row > pos.row {
                    options[n] = Action::Down;
                    n += 1;
                }
                if target.col < pos.col {
                    options[n] = Action::Left;
                    n += 1;
                } else if target.col > pos.col {
                    options[n] = Action::Right;
                    n += 1;
                }
                let a = options[rng.random_range(0..n)];
                pos = apply_move(pos, a, self.config.grid_size);
                actions.push(a);
            }
            actions.push(Action::Toggle);
        }
        if actions.len() > self.config.max_horizon_cap as usize {
            return Err(Error::Generation(format!(
                "expert needs {} steps but env.max_horizon_cap = {}",
                actions.len(),
                self.config.max_horizon_cap
            )));
        }
        Ok(actions)
    }
}

fn apply_move(pos: Cell, action: Action, grid_size: u32) -> Cell {
    let (dr, dc) = match action {
        Action::Up => (-1, 0),
        Action::Down => (1, 0),
        Action::Left => (0, -1),
        Action::Right => (0, 1),
        Action::Toggle | Action::Noop => (0, 0),
    };
    let next = Cell::new(pos.row + dr, pos.col + dc);
    if next.in_grid(grid_size) {
        next
    } else {
        pos
    }
}

/// One running episode. Owns its state; independent episodes share nothing.
#[derive(Debug, Clone)]
pub struct Episode {
    world: World,
    obs: Observation,
}

impl Episode {
    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn done_by_cap(&self) -> bool {
        self.obs.step_index >= self.world.config.max_horizon_cap
    }

    /// Executes the chunk's tokens in order. Tokens past the step ceiling
    /// are dropped. Returns the new observation and whether the ceiling has
    /// been reached.
    pub fn step(&mut self, tokens: &[usize]) -> Result<(Observation, bool)> {
        if self.done_by_cap() {
            return Err(Error::State(format!(
                "step called at step_index {} after reaching the horizon cap",
                self.obs.step_index
            )));
        }
        let actions = tokens
            .iter()
            .map(|&t| {
                Action::from_token(t)
                    .ok_or_else(|| Error::Argument(format!("action token {} out of range", t)))
            })
            .collect::<Result<Vec<_>>>()?;
        for action in actions {
            if self.done_by_cap() {
                break;
            }
            self.apply(action);
        }
        Ok((self.obs.clone(), self.done_by_cap()))
    }

    fn apply(&mut self, action: Action) {
        let world = &self.world;
        let obs = &mut self.obs;
        match action {
            Action::Toggle => {
                obs.gripper = !obs.gripper;
                let k = obs.stage_index;
                if world.task.stage_targets.get(k) == Some(&obs.agent_pos) {
                    obs.item_flags[k] = true;
                    obs.stage_index += 1;
                    obs.closest_approach = world.distance_to_next(obs.agent_pos, obs.stage_index);
                    obs.stage_start_distance = obs.closest_approach;
                }
            }
            Action::Noop => {}
            mv => {
                obs.agent_pos = apply_move(obs.agent_pos, mv, world.config.grid_size);
                let d = world.distance_to_next(obs.agent_pos, obs.stage_index);
                obs.closest_approach = obs.closest_approach.min(d);
            }
        }
        obs.step_index += 1;
    }
}
