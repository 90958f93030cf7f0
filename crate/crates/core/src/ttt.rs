//! Behavior-cloning pretraining followed by the test-time training loop:
//! grouped rollouts, estimator rewards, GRPO updates, all under the
//! horizon schedule.

use alloc::vec::Vec;

use serde::Serialize;

use crate::config::RunConfig;
use crate::critic::{Critic, NoisyOracleCritic};
use crate::envsim::World;
use crate::envsim::NUM_ACTIONS;
use crate::evalbench;
use crate::grpo::{self, GroupBatch};
use crate::policy::{feature_dim, featurize, PolicyParams};
use crate::progress::{ProgressConfig, ProgressEstimator};
use crate::seed;
use crate::trajectory::{Step, Trajectory};
use crate::Result;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationMetrics {
    pub iteration: u64,
    pub h_max: u32,
    pub mean_reward: f64,
    pub reward_std: f64,
    pub critic_calls: u64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_sr: Option<f64>,
}

/// Zero weights, i.e. the uniform policy, sized for the config's world.
pub fn init_params(config: &RunConfig, world: &World) -> Result<PolicyParams> {
    PolicyParams::zeros(config.policy.num_slots, NUM_ACTIONS, feature_dim(world))
}

pub fn pretrain_bc(config: &RunConfig) -> Result<PolicyParams> {
    pretrain_bc_with_curve(config).map(|(p, _)| p)
}

/// Maximum-likelihood imitation of `bc_demos` scripted demonstrations at
/// temperature 1, by full-batch gradient ascent. Also returns the summed
/// demo log-likelihood before each epoch and after the last one.
pub fn pretrain_bc_with_curve(config: &RunConfig) -> Result<(PolicyParams, Vec<f64>)> {
    config.validate()?;
    let world = config.world()?;
    let mut params = init_params(config, &world)?;
    if config.bc_demos == 0 {
        return Ok((params, Vec::new()));
    }
    let demos = (0..config.bc_demos as u64)
        .map(|d| {
            world.scripted_expert(
                seed::derive(config.master_seed, "bc-demo", d),
                config.policy.num_slots,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<(Vec<f64>, &[usize])> = demos
        .iter()
        .flat_map(|d| d.steps.iter())
        .map(|s| (featurize(&world, &s.observation), s.tokens.as_slice()))
        .collect();
    let mut curve = Vec::with_capacity(config.bc_epochs + 1);
    for _ in 0..config.bc_epochs {
        let mut grad = params.zeros_like();
        let mut ll = 0.0;
        for (phi, tokens) in &samples {
            ll += params.accumulate_grad_log_prob(phi, tokens, 1.0, 1.0, &mut grad)?;
        }
        curve.push(ll);
        params.add_scaled(&grad, config.bc_step_size)?;
    }
    let mut ll = 0.0;
    for (phi, tokens) in &samples {
        ll += params.log_prob(phi, tokens, 1.0)?;
    }
    curve.push(ll);
    Ok((params, curve))
}

/// One closed-loop rollout from `reset(episode_seed)`. Stops when the
/// estimator deems the task complete or `h_max` steps have elapsed. The
/// trajectory's reward is the estimator's final reward.
#[allow(clippy::too_many_arguments)]
pub fn rollout<C: Critic>(
    params: &PolicyParams,
    world: &World,
    critic: &C,
    progress: &ProgressConfig,
    temperature: f64,
    h_max: u32,
    episode_seed: u64,
    action_seed: u64,
) -> Result<Trajectory> {
    let world = world.with_cap(h_max.min(world.config().max_horizon_cap))?;
    let mut episode = world.reset(episode_seed);
    let mut estimator = ProgressEstimator::new(progress, episode.observation().clone());
    let mut steps = Vec::new();
    let mut terminated = false;
    while !episode.done_by_cap() {
        let obs = episode.observation().clone();
        let phi = featurize(&world, &obs);
        let chunk = params.sample_chunk(
            &phi,
            temperature,
            seed::derive(action_seed, "action", u64::from(obs.step_index)),
        )?;
        let (next, _) = episode.step(&chunk.tokens)?;
        steps.push(Step {
            observation: obs,
            tokens: chunk.tokens,
            log_prob: chunk.log_prob,
        });
        if estimator.observe(critic, &next)? {
            terminated = true;
            break;
        }
    }
    let mut traj = Trajectory::new(steps, episode.observation().clone());
    traj.terminated_by_progress = terminated;
    traj.critic_calls = estimator.calls_made();
    traj.assign_reward(estimator.final_reward())?;
    Ok(traj)
}

/// G independent rollouts under one policy snapshot. Every random stream
/// derives from (master_seed, group_seed, trajectory index).
pub fn rollout_group(
    params: &PolicyParams,
    config: &RunConfig,
    h_max: u32,
    group_seed: u64,
) -> Result<GroupBatch> {
    let world = config.world()?;
    let critic = NoisyOracleCritic::new(world.clone(), config.critic.clone())?;
    let master = config.master_seed;
    let trajectories = (0..config.grpo.group_size as u64)
        .map(|i| {
            let critic = critic.reseeded(seed::derive2(
                master ^ config.critic.seed,
                "critic",
                group_seed,
                i,
            ));
            rollout(
                params,
                &world,
                &critic,
                &config.progress,
                config.temperature,
                h_max,
                seed::derive2(master, "episode", group_seed, i),
                seed::derive2(master, "policy", group_seed, i),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    GroupBatch::new(world, trajectories, config.temperature)
}

/// Runs `num_iterations` of rollout + GRPO update. Each iteration's metrics
/// are handed to `sink` as soon as they exist, so an error mid-run leaves
/// the log complete up to the failure.
pub fn run_ttt(
    params: &PolicyParams,
    config: &RunConfig,
    sink: &mut dyn FnMut(&IterationMetrics),
) -> Result<(PolicyParams, Vec<IterationMetrics>)> {
    config.validate()?;
    let mut params = params.clone();
    let mut log = Vec::with_capacity(config.num_iterations as usize);
    for iteration in 0..config.num_iterations {
        let h_max = config.schedule.horizon_at(iteration)?;
        let mut batch = rollout_group(&params, config, h_max, iteration)?;
        batch.compute_advantages(config.grpo.std_floor)?;
        let (next, stats) = grpo::update(&batch, &params, &config.grpo)?;
        params = next;
        let is_last = iteration + 1 == config.num_iterations;
        let eval_sr = if (iteration + 1) % config.eval.interval == 0 || is_last {
            Some(evalbench::eval_success_rate(
                &params,
                config,
                config.eval.episodes,
            )?)
        } else {
            None
        };
        let metrics = IterationMetrics {
            iteration,
            h_max,
            mean_reward: batch.rewards.iter().sum::<f64>() / batch.rewards.len() as f64,
            reward_std: grpo::population_std(&batch.rewards),
            critic_calls: batch.trajectories.iter().map(|t| t.critic_calls).sum(),
            clip_fraction: stats.clip_fraction,
            grad_norm: stats.grad_norm,
            eval_sr,
        };
        sink(&metrics);
        log.push(metrics);
    }
    Ok((params, log))
}
