//! Rollout-time progress estimation.
//!
//! The accumulative estimator keeps milestone frames every
//! `delta_milestone` steps and, every `delta_check` steps, asks the critic
//! how far the current frame has moved past the most recent milestone. At
//! milestone ticks the critic value is folded into a running estimate with
//! diminishing returns:
//!
//! ```text
//! v <- clamp(v + (100 - v) * c / 100, 0, 100)
//! ```
//!
//! Two baselines share the same interface: the vanilla estimator compares
//! the first frame with the current one, and the uniform estimator folds
//! the same recursion over N frames spread evenly over the rollout so far.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::critic::Critic;
use crate::envsim::Observation;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Accumulative,
    Vanilla,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProgressConfig {
    pub delta_milestone: u32,
    pub delta_check: u32,
    pub tau_threshold: f64,
    pub estimator: EstimatorKind,
    /// Frame count for the uniform estimator.
    pub uniform_frames: usize,
}

impl Default for ProgressConfig {
    fn default() -> Self {
        Self {
            delta_milestone: 64,
            delta_check: 16,
            tau_threshold: 0.95,
            estimator: EstimatorKind::Accumulative,
            uniform_frames: 4,
        }
    }
}

impl ProgressConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta_milestone == 0 || self.delta_check == 0 {
            return Err(Error::Config(
                "progress.delta_milestone and progress.delta_check must be positive".into(),
            ));
        }
        if self.delta_check > self.delta_milestone
            || !self.delta_milestone.is_multiple_of(self.delta_check)
        {
            return Err(Error::Config(format!(
                "progress.delta_check ({}) must divide and not exceed progress.delta_milestone ({})",
                self.delta_check, self.delta_milestone
            )));
        }
        if !(self.tau_threshold > 0.0 && self.tau_threshold <= 1.0) {
            return Err(Error::Config(
                "progress.tau_threshold must lie in (0, 1]".into(),
            ));
        }
        if self.estimator == EstimatorKind::Uniform && self.uniform_frames < 2 {
            return Err(Error::Config("progress.uniform_frames must be >= 2".into()));
        }
        Ok(())
    }

    /// Critic calls issued at each check by the configured estimator.
    pub fn calls_per_check(&self) -> u64 {
        match self.estimator {
            EstimatorKind::Accumulative | EstimatorKind::Vanilla => 1,
            EstimatorKind::Uniform => self.uniform_frames as u64 - 1,
        }
    }
}

/// Diminishing-returns update, clamped to [0, 100].
pub fn accumulate(v: f64, c: f64) -> f64 {
    (v + (100.0 - v) * c / 100.0).clamp(0.0, 100.0)
}

/// One critic query, recorded when tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub t: u32,
    pub gap: u32,
    pub c: f64,
    pub v_current: f64,
    pub calls_made: u64,
}

/// State of the accumulative estimator for one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct MilestoneBuffer {
    pub milestones: Vec<Observation>,
    pub critic_history: Vec<f64>,
    pub values: Vec<f64>,
    pub v_current: f64,
    pub calls_made: u64,
    last_t: u32,
    trace: Option<Vec<TraceEntry>>,
}

impl MilestoneBuffer {
    pub fn new(first: Observation) -> Self {
        let last_t = first.step_index;
        Self {
            milestones: vec![first],
            critic_history: Vec::new(),
            values: vec![0.0],
            v_current: 0.0,
            calls_made: 0,
            last_t,
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> &[TraceEntry] {
        self.trace.as_deref().unwrap_or(&[])
    }

    fn push_milestone(&mut self, obs: &Observation, c: f64, v: f64) {
        self.milestones.push(obs.clone());
        self.critic_history.push(c);
        self.v_current = v;
        self.values.push(v);
    }

    /// Feeds the frame observed at timestep `t`. Returns whether the rollout
    /// should stop because the task is deemed complete.
    ///
    /// Between milestones the latest critic value is folded provisionally
    /// for the termination test only. If that provisional value crosses the
    /// threshold, the frame is committed as a closing milestone so the
    /// returned reward is the value that triggered termination.
    pub fn observe<C: Critic>(
        &mut self,
        config: &ProgressConfig,
        critic: &C,
        obs: &Observation,
        t: u32,
    ) -> Result<bool> {
        check_order(self.last_t, obs, t)?;
        self.last_t = t;
        if !t.is_multiple_of(config.delta_check) {
            return Ok(false);
        }
        let reference = self.milestones.last().expect("o_0 is always stored");
        let gap = reference.step_index.abs_diff(obs.step_index);
        let c = critic.estimate(reference, obs, self.calls_made)?.value();
        self.calls_made += 1;
        let provisional = accumulate(self.v_current, c);
        let terminate = provisional / 100.0 > config.tau_threshold;
        if t.is_multiple_of(config.delta_milestone) || terminate {
            self.push_milestone(obs, c, provisional);
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry {
                t,
                gap,
                c,
                v_current: self.v_current,
                calls_made: self.calls_made,
            });
        }
        Ok(terminate)
    }

    pub fn final_reward(&self) -> f64 {
        self.v_current / 100.0
    }
}

fn check_order(last_t: u32, obs: &Observation, t: u32) -> Result<()> {
    if t <= last_t {
        return Err(Error::State(format!(
            "timestep {} is not after the last observed timestep {}",
            t, last_t
        )));
    }
    if obs.step_index != t {
        return Err(Error::State(format!(
            "observation step_index {} does not match timestep {}",
            obs.step_index, t
        )));
    }
    Ok(())
}

/// Critic value mapped from [-100, 100] to [0, 1].
pub fn normalize_vanilla(c: f64) -> f64 {
    (c + 100.0) / 200.0
}

/// Two-frame reward: the critic's verdict on (o_0, o_H), normalized.
pub fn vanilla_reward<C: Critic>(
    critic: &C,
    first: &Observation,
    last: &Observation,
    call_index: u64,
) -> Result<f64> {
    Ok(normalize_vanilla(
        critic.estimate(first, last, call_index)?.value(),
    ))
}

/// Folds the accumulation recursion over consecutive frame pairs and
/// returns the final value over 100. Issues `frames.len() - 1` calls,
/// indexed from `call_base`.
pub fn uniform_multiframe_reward<C: Critic>(
    critic: &C,
    frames: &[&Observation],
    call_base: u64,
) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::Argument(
            "uniform estimation needs at least two frames".into(),
        ));
    }
    let mut v = 0.0;
    for (i, pair) in frames.windows(2).enumerate() {
        let c = critic
            .estimate(pair[0], pair[1], call_base + i as u64)?
            .value();
        v = accumulate(v, c);
    }
    Ok(v / 100.0)
}

/// Indices of `n` frames spread evenly over `0..=last`.
pub fn uniform_indices(last: usize, n: usize) -> Vec<usize> {
    (0..n).map(|j| (j * last + (n - 1) / 2) / (n - 1)).collect()
}

#[derive(Debug, Clone)]
struct VanillaState {
    first: Observation,
    last_value: Option<f64>,
    calls_made: u64,
    last_t: u32,
}

#[derive(Debug, Clone)]
struct UniformState {
    frames: Vec<Observation>,
    last_value: Option<f64>,
    calls_made: u64,
}

#[derive(Debug, Clone)]
enum EstimatorState {
    Accumulative(MilestoneBuffer),
    Vanilla(VanillaState),
    Uniform(UniformState),
}

/// The per-rollout estimator selected by [`ProgressConfig::estimator`].
#[derive(Debug, Clone)]
pub struct ProgressEstimator {
    config: ProgressConfig,
    state: EstimatorState,
}

impl ProgressEstimator {
    pub fn new(config: &ProgressConfig, first: Observation) -> Self {
        let state = match config.estimator {
            EstimatorKind::Accumulative => {
                EstimatorState::Accumulative(MilestoneBuffer::new(first))
            }
            EstimatorKind::Vanilla => EstimatorState::Vanilla(VanillaState {
                last_t: first.step_index,
                first,
                last_value: None,
                calls_made: 0,
            }),
            EstimatorKind::Uniform => EstimatorState::Uniform(UniformState {
                frames: vec![first],
                last_value: None,
                calls_made: 0,
            }),
        };
        Self {
            config: config.clone(),
            state,
        }
    }

    pub fn observe<C: Critic>(&mut self, critic: &C, obs: &Observation) -> Result<bool> {
        let t = obs.step_index;
        let cfg = &self.config;
        match &mut self.state {
            EstimatorState::Accumulative(buf) => buf.observe(cfg, critic, obs, t),
            EstimatorState::Vanilla(s) => {
                check_order(s.last_t, obs, t)?;
                s.last_t = t;
                if !t.is_multiple_of(cfg.delta_check) {
                    return Ok(false);
                }
                let value = vanilla_reward(critic, &s.first, obs, s.calls_made)?;
                s.calls_made += 1;
                s.last_value = Some(value);
                Ok(value > cfg.tau_threshold)
            }
            EstimatorState::Uniform(s) => {
                let last_t = s.frames.last().map_or(0, |f| f.step_index);
                check_order(last_t, obs, t)?;
                s.frames.push(obs.clone());
                if !t.is_multiple_of(cfg.delta_check) {
                    return Ok(false);
                }
                let picked: Vec<&Observation> =
                    uniform_indices(s.frames.len() - 1, cfg.uniform_frames)
                        .into_iter()
                        .map(|i| &s.frames[i])
                        .collect();
                let value = uniform_multiframe_reward(critic, &picked, s.calls_made)?;
                s.calls_made += picked.len() as u64 - 1;
                s.last_value = Some(value);
                Ok(value > cfg.tau_threshold)
            }
        }
    }

    /// Reward for the rollout so far, in [0, 1].
    pub fn final_reward(&self) -> f64 {
        match &self.state {
            EstimatorState::Accumulative(buf) => buf.final_reward(),
            EstimatorState::Vanilla(s) => s.last_value.unwrap_or(0.5),
            EstimatorState::Uniform(s) => s.last_value.unwrap_or(0.0),
        }
    }

    pub fn calls_made(&self) -> u64 {
        match &self.state {
            EstimatorState::Accumulative(buf) => buf.calls_made,
            EstimatorState::Vanilla(s) => s.calls_made,
            EstimatorState::Uniform(s) => s.calls_made,
        }
    }

    pub fn milestone_buffer(&self) -> Option<&MilestoneBuffer> {
        match &self.state {
            EstimatorState::Accumulative(buf) => Some(buf),
            _ => None,
        }
    }
}

/// Runs an estimator over a recorded frame sequence `o_0 .. o_H`, stopping
/// early if it signals termination. Returns (reward, calls, terminated).
pub fn score_frames<'a, C: Critic>(
    config: &ProgressConfig,
    critic: &C,
    frames: impl IntoIterator<Item = &'a Observation>,
) -> Result<(f64, u64, bool)> {
    let mut it = frames.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::Argument("no frames to score".into()))?;
    let mut est = ProgressEstimator::new(config, first.clone());
    for obs in it {
        if est.observe(critic, obs)? {
            return Ok((est.final_reward(), est.calls_made(), true));
        }
    }
    Ok((est.final_reward(), est.calls_made(), false))
}
