use alloc::format;

use serde::{Deserialize, Serialize};

use crate::critic::CriticConfig;
use crate::curriculum::HorizonSchedule;
use crate::envsim::{EnvConfig, TaskSpec, World};
use crate::grpo::GrpoConfig;
use crate::progress::ProgressConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Tokens per action chunk.
    pub num_slots: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { num_slots: 1 }
    }
}

/// Greedy evaluation during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub interval: u64,
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            interval: 5,
            episodes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(alias = "seed")]
    pub master_seed: u64,
    pub temperature: f64,
    /// Discount factor of the MDP. Trajectory rewards are undiscounted, so
    /// the update does not read it.
    pub gamma: f64,
    pub num_iterations: u64,
    pub bc_demos: usize,
    pub bc_epochs: usize,
    pub bc_step_size: f64,
    pub env: EnvConfig,
    pub task: TaskSpec,
    pub critic: CriticConfig,
    pub progress: ProgressConfig,
    pub grpo: GrpoConfig,
    pub policy: PolicyConfig,
    pub eval: EvalConfig,
    pub schedule: HorizonSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            temperature: 1.2,
            gamma: 1.0,
            num_iterations: 100,
            bc_demos: 1,
            bc_epochs: 200,
            bc_step_size: 1.0,
            env: EnvConfig::default(),
            task: TaskSpec::default(),
            critic: CriticConfig::default(),
            progress: ProgressConfig::default(),
            grpo: GrpoConfig::default(),
            policy: PolicyConfig::default(),
            eval: EvalConfig::default(),
            schedule: HorizonSchedule {
                stages: alloc::vec::Vec::new(),
            },
        }
    }
}

impl RunConfig {
    /// Fills layout and schedule fields left empty with their defaults: the
    /// chain layout for the env, and a fixed horizon at the env cap.
    pub fn materialize(mut self) -> Self {
        self.task = self.task.materialize(&self.env);
        if self.schedule.stages.is_empty() {
            self.schedule = HorizonSchedule::fixed(self.env.max_horizon_cap);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.critic.validate()?;
        self.progress.validate()?;
        self.grpo.validate()?;
        self.schedule.validate(self.env.max_horizon_cap)?;
        World::new(self.env.clone(), self.task.clone())?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        if !(self.bc_step_size > 0.0 && self.bc_step_size.is_finite()) {
            return Err(Error::Config("bc_step_size must be > 0".into()));
        }
        let slots = self.policy.num_slots;
        if slots == 0 || !(self.progress.delta_check as usize).is_multiple_of(slots) {
            return Err(Error::Config(format!(
                "policy.num_slots ({}) must be positive and divide progress.delta_check ({})",
                slots, self.progress.delta_check
            )));
        }
        if self.eval.interval == 0 || self.eval.episodes == 0 {
            return Err(Error::Config(
                "eval.interval and eval.episodes must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn world(&self) -> Result<World> {
        World::new(self.env.clone(), self.task.clone())
    }
}
