use alloc::vec::Vec;

use crate::envsim::Observation;
use crate::{Error, Result};

/// One decision: the observation it was taken from, the chunk's tokens and
/// the behavior policy's joint log-probability of that chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Observation,
    pub tokens: Vec<usize>,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Observation after the last step.
    pub final_observation: Observation,
    reward: Option<f64>,
    pub terminated_by_progress: bool,
    pub critic_calls: u64,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>, final_observation: Observation) -> Self {
        Self {
            steps,
            final_observation,
            reward: None,
            terminated_by_progress: false,
            critic_calls: 0,
        }
    }

    pub fn final_step_index(&self) -> u32 {
        self.final_observation.step_index
    }

    pub fn reward(&self) -> Option<f64> {
        self.reward
    }

    /// Sets the trajectory reward. A reward may be assigned only once.
    pub fn assign_reward(&mut self, reward: f64) -> Result<()> {
        if self.reward.is_some() {
            return Err(Error::State("trajectory reward already assigned".into()));
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::Argument(
                "trajectory reward must lie in [0, 1]".into(),
            ));
        }
        self.reward = Some(reward);
        Ok(())
    }

    /// All observations o_0 .. o_H in order.
    pub fn frames(&self) -> impl Iterator<Item = &Observation> {
        self.steps
            .iter()
            .map(|s| &s.observation)
            .chain(core::iter::once(&self.final_observation))
    }
}
