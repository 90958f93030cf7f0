//! Progressive horizon extension: training runs through stages of growing
//! maximum rollout length.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonStage {
    pub h_max: u32,
    /// Iteration budget; `None` means the stage never ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSchedule {
    pub stages: Vec<HorizonStage>,
}

impl HorizonSchedule {
    /// A single unbounded stage: fixed-horizon training.
    pub fn fixed(h_max: u32) -> Self {
        Self {
            stages: alloc::vec![HorizonStage {
                h_max,
                iterations: None,
            }],
        }
    }

    /// Geometric doubling ladder ending at `full_horizon`:
    /// `h_k = ceil(full_horizon / 2^(num_stages - k))`, each stage but the
    /// last running `iterations_per_stage` iterations.
    pub fn geometric(full_horizon: u32, num_stages: u32, iterations_per_stage: u64) -> Self {
        let n = num_stages.max(1);
        let stages = (1..=n)
            .map(|k| {
                let div = 1u64 << (n - k).min(63);
                HorizonStage {
                    h_max: u64::from(full_horizon).div_ceil(div) as u32,
                    iterations: (k < n).then_some(iterations_per_stage),
                }
            })
            .collect();
        Self { stages }
    }

    pub fn validate(&self, full_horizon: u32) -> Result<()> {
        let last = self
            .stages
            .last()
            .ok_or_else(|| Error::Config("schedule.stages must not be empty".into()))?;
        if self.stages.iter().any(|s| s.h_max == 0) {
            return Err(Error::Config(
                "schedule.stages: h_max must be positive".into(),
            ));
        }
        if self.stages.windows(2).any(|w| w[0].h_max >= w[1].h_max) {
            return Err(Error::Config(
                "schedule.stages: h_max must be strictly increasing".into(),
            ));
        }
        if self.stages[..self.stages.len() - 1]
            .iter()
            .any(|s| s.iterations.is_none_or(|n| n == 0))
        {
            return Err(Error::Config(
                "schedule.stages: every stage but the last needs a positive iteration budget"
                    .into(),
            ));
        }
        if last.h_max != full_horizon {
            return Err(Error::Config(format!(
                "schedule.stages: final h_max {} must equal env.max_horizon_cap {}",
                last.h_max, full_horizon
            )));
        }
        Ok(())
    }

    /// Horizon for a training iteration. Stage budgets are consumed in
    /// order as half-open ranges; past the schedule the last stage applies.
    pub fn horizon_at(&self, iteration: u64) -> Result<u32> {
        let mut start = 0u64;
        for stage in &self.stages {
            match stage.iterations {
                Some(n) if iteration >= start.saturating_add(n) => start = start.saturating_add(n),
                _ => return Ok(stage.h_max),
            }
        }
        self.stages
            .last()
            .map(|s| s.h_max)
            .ok_or_else(|| Error::Config("schedule.stages must not be empty".into()))
    }
}
