//! Group Relative Policy Optimization.
//!
//! Rewards of a group of rollouts from one task and one behavior snapshot
//! are normalized within the group to give advantages. The policy then
//! ascends the clipped importance-ratio surrogate
//!
//! ```text
//! L = 1/G * sum_i 1/|tau_i| * sum_t min(r_t * A_i, clip(r_t, 1 - eps, 1 + eps) * A_i)
//! ```
//!
//! with `r_t = pi(a_t | s_t) / pi_behavior(a_t | s_t)`. There is no value
//! network and no KL term.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::envsim::World;
use crate::policy::{featurize, PolicyParams};
use crate::trajectory::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    /// Ascent step on the length- and group-normalized surrogate, so it is
    /// sized per trajectory rather than per step.
    pub step_size: f64,
    pub epochs_per_batch: usize,
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_epsilon: 0.2,
            step_size: 2.0,
            epochs_per_batch: 2,
            std_floor: 1e-6,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::Config("grpo.group_size must be >= 2".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Config("grpo.clip_epsilon must lie in (0, 1)".into()));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("grpo.step_size must be >= 0".into()));
        }
        if self.std_floor.is_nan() || self.std_floor <= 0.0 {
            return Err(Error::Config("grpo.std_floor must be > 0".into()));
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    libm::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

/// `A_i = (R_i - mean R) / max(std R, std_floor)`; all zeros for a
/// constant group.
pub fn compute_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::Argument(format!(
            "advantages need a group of at least 2, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().all(|r| *r == rewards[0]) {
        return Ok(alloc::vec![0.0; rewards.len()]);
    }
    let m = mean(rewards);
    let s = population_std(rewards).max(std_floor);
    Ok(rewards.iter().map(|r| (r - m) / s).collect())
}

/// G rollouts of one task from one behavior snapshot.
#[derive(Debug, Clone)]
pub struct GroupBatch {
    pub world: World,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Temperature the behavior log-probabilities were computed at.
    pub temperature: f64,
}

impl GroupBatch {
    /// Collects the trajectories' rewards. Every trajectory must already
    /// carry its reward.
    pub fn new(world: World, trajectories: Vec<Trajectory>, temperature: f64) -> Result<Self> {
        let rewards = trajectories
            .iter()
            .map(|t| {
                t.reward()
                    .ok_or_else(|| Error::State("trajectory has no reward".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            world,
            trajectories,
            rewards,
            advantages: Vec::new(),
            temperature,
        })
    }

    pub fn compute_advantages(&mut self, std_floor: f64) -> Result<()> {
        self.advantages = compute_advantages(&self.rewards, std_floor)?;
        Ok(())
    }

    pub fn group_size(&self) -> usize {
        self.trajectories.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SurrogateStats {
    pub steps: usize,
    pub clipped_steps: usize,
    pub grad_norm: f64,
}

impl SurrogateStats {
    pub fn clip_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.clipped_steps as f64 / self.steps as f64
        }
    }
}

/// Ascent direction of the clipped surrogate at `params`.
pub fn surrogate_gradient(
    batch: &GroupBatch,
    params: &PolicyParams,
    config: &GrpoConfig,
) -> Result<(PolicyParams, SurrogateStats)> {
    if batch.advantages.len() != batch.trajectories.len() {
        return Err(Error::State("advantages have not been computed".into()));
    }
    let g = batch.trajectories.len() as f64;
    let eps = config.clip_epsilon;
    let mut grad = params.zeros_like();
    let mut stats = SurrogateStats::default();
    for (traj, &adv) in batch.trajectories.iter().zip(&batch.advantages) {
        if traj.steps.is_empty() || adv == 0.0 {
            stats.steps += traj.steps.len();
            continue;
        }
        let weight = adv / (g * traj.steps.len() as f64);
        for step in &traj.steps {
            stats.steps += 1;
            if !step.log_prob.is_finite() {
                return Err(Error::State("step has no behavior log-probability".into()));
            }
            let phi = featurize(&batch.world, &step.observation);
            let logp = params.log_prob(&phi, &step.tokens, batch.temperature)?;
            let ratio = libm::exp(logp - step.log_prob);
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
            if ratio * adv > clipped * adv {
                stats.clipped_steps += 1;
                continue;
            }
            params.accumulate_grad_log_prob(
                &phi,
                &step.tokens,
                batch.temperature,
                weight * ratio,
                &mut grad,
            )?;
        }
    }
    stats.grad_norm = grad.l2_norm();
    Ok((grad, stats))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    /// Mean clip fraction over epochs.
    pub clip_fraction: f64,
    /// Norm of the first epoch's gradient.
    pub grad_norm: f64,
}

/// `epochs_per_batch` rounds of surrogate ascent. Inputs are not modified.
pub fn update(
    batch: &GroupBatch,
    params: &PolicyParams,
    config: &GrpoConfig,
) -> Result<(PolicyParams, UpdateStats)> {
    let mut current = params.clone();
    let mut stats = UpdateStats::default();
    for epoch in 0..config.epochs_per_batch {
        let (grad, s) = surrogate_gradient(batch, &current, config)?;
        if epoch == 0 {
            stats.grad_norm = s.grad_norm;
        }
        stats.clip_fraction += s.clip_fraction() / config.epochs_per_batch as f64;
        current.add_scaled(&grad, config.step_size)?;
    }
    Ok((current, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn advantage_examples() {
        assert_eq!(
            compute_advantages(&[1.0, 0.0, 1.0, 0.0], 1e-6).unwrap(),
            vec![1.0, -1.0, 1.0, -1.0]
        );
        assert_eq!(
            compute_advantages(&[0.7, 0.7, 0.7], 1e-6).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        let a = compute_advantages(&[0.9, 0.5, 0.1, 0.5], 1e-6).unwrap();
        let r2 = core::f64::consts::SQRT_2;
        for (x, y) in a.iter().zip([r2, 0.0, -r2, 0.0]) {
            assert!((x - y).abs() < 1e-12, "{:?}", a);
        }
    }

    #[test]
    fn single_reward_rejected() {
        assert!(matches!(
            compute_advantages(&[0.4], 1e-6),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn std_floor_caps_scale() {
        let a = compute_advantages(&[0.5, 0.5 + 1e-9], 1e-3).unwrap();
        assert!(a.iter().all(|x| x.abs() < 1e-5));
    }

    #[test]
    fn config_validation() {
        assert!(GrpoConfig::default().validate().is_ok());
        for bad in [
            GrpoConfig {
                group_size: 1,
                ..GrpoConfig::default()
            },
            GrpoConfig {
                clip_epsilon: 1.0,
                ..GrpoConfig::default()
            },
            GrpoConfig {
                std_floor: 0.0,
                ..GrpoConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
