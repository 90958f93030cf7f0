//! Evaluation and ablation harness: greedy success rate, estimator F-score
//! on a balanced labeled set, reward-call accounting and variant runners.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::critic::{CriticConfig, NoisyOracleCritic};
use crate::curriculum::HorizonSchedule;
use crate::envsim::{Action, Observation, World, NUM_ACTIONS};
use crate::policy::{featurize, PolicyParams};
use crate::progress::{score_frames, EstimatorKind, ProgressConfig};
use crate::seed;
use crate::ttt::{self, IterationMetrics};
use crate::{Error, Result};

/// Greedy episode from `reset(episode_seed)`; ends at rule-based success or
/// the env cap. Returns the final observation and the success flag.
pub fn greedy_episode(
    params: &PolicyParams,
    world: &World,
    episode_seed: u64,
) -> Result<(Observation, bool)> {
    let mut episode = world.reset(episode_seed);
    while !episode.done_by_cap() {
        if world.oracle_success(episode.observation()) {
            break;
        }
        let phi = featurize(world, episode.observation());
        let tokens = params.greedy_chunk(&phi)?;
        episode.step(&tokens)?;
    }
    let obs = episode.observation().clone();
    let success = world.oracle_success(&obs);
    Ok((obs, success))
}

/// Fraction of greedy episodes that succeed, mismatch disabled.
pub fn eval_success_rate(
    params: &PolicyParams,
    config: &RunConfig,
    episodes: usize,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::Argument(
            "evaluation needs at least one episode".into(),
        ));
    }
    let world = config.world()?.with_mismatch(false);
    let mut wins = 0usize;
    for e in 0..episodes as u64 {
        let (_, ok) = greedy_episode(params, &world, seed::derive(config.master_seed, "eval", e))?;
        wins += usize::from(ok);
    }
    Ok(wins as f64 / episodes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold_used: f64,
    pub num_success_cases: usize,
    pub num_failure_cases: usize,
}

impl FScoreReport {
    /// Scores the success class from (prediction, label) pairs.
    pub fn from_predictions(pairs: &[(bool, bool)], threshold: f64) -> Self {
        let tp = pairs.iter().filter(|&&(p, l)| p && l).count();
        let fp = pairs.iter().filter(|&&(p, l)| p && !l).count();
        let fn_ = pairs.iter().filter(|&&(p, l)| !p && l).count();
        let (precision, recall, f1) = f1_from_counts(tp, fp, fn_);
        Self {
            precision,
            recall,
            f1,
            threshold_used: threshold,
            num_success_cases: pairs.iter().filter(|p| p.1).count(),
            num_failure_cases: pairs.iter().filter(|p| !p.1).count(),
        }
    }
}

/// (precision, recall, F1) with 0 for any undefined ratio.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseKind {
    Expert,
    TruncatedExpert,
    Random,
}

/// A recorded frame sequence `o_0 .. o_H` with its rule-based label.
#[derive(Debug, Clone)]
pub struct LabeledTrajectory {
    pub frames: Vec<Observation>,
    pub label: bool,
    pub kind: CaseKind,
}

/// Rolls `actions` from `reset(episode_seed)` then pads with no-ops until
/// the env cap.
fn record(world: &World, episode_seed: u64, actions: &[Action]) -> Result<Vec<Observation>> {
    let mut episode = world.reset(episode_seed);
    let mut frames = vec![episode.observation().clone()];
    let noop = Action::Noop;
    let mut it = actions.iter().chain(core::iter::repeat(&noop));
    while !episode.done_by_cap() {
        let a = it.next().expect("repeat never ends");
        let (obs, _) = episode.step(&[a.token()])?;
        frames.push(obs);
    }
    Ok(frames)
}

/// Balanced labeled set at the env's full horizon. Successes are
/// seed-jittered expert demonstrations; failures alternate between expert
/// demonstrations cut short and uniform-random action sequences. Labels
/// come from the rule-based success test with mismatch disabled.
pub fn build_validation_set(
    config: &RunConfig,
    num_success: usize,
    num_failure: usize,
) -> Result<Vec<LabeledTrajectory>> {
    let world = config.world()?.with_mismatch(false);
    let base = seed::derive(config.master_seed, "validation", 0);
    let mut set = Vec::with_capacity(num_success + num_failure);
    for i in 0..num_success as u64 {
        let ep_seed = seed::derive(base, "success", i);
        let frames = record(&world, ep_seed, &world.expert_actions(ep_seed)?)?;
        let label = world.oracle_success(frames.last().expect("nonempty"));
        debug_assert!(label);
        set.push(LabeledTrajectory {
            frames,
            label,
            kind: CaseKind::Expert,
        });
    }
    let mut produced = 0usize;
    let mut attempt = 0u64;
    while produced < num_failure {
        let ep_seed = seed::derive(base, "failure", attempt);
        let mut rng = seed::rng(seed::derive(base, "failure-actions", attempt));
        attempt += 1;
        let (kind, actions) = if produced.is_multiple_of(2) {
            let full = world.expert_actions(ep_seed)?;
            let cut = rng.random_range(0..full.len());
            (CaseKind::TruncatedExpert, full[..cut].to_vec())
        } else {
            let n = world.config().max_horizon_cap as usize;
            let acts = (0..n)
                .map(|_| Action::ALL[rng.random_range(0..NUM_ACTIONS)])
                .collect::<Vec<_>>();
            (CaseKind::Random, acts)
        };
        let frames = record(&world, ep_seed, &actions)?;
        if world.oracle_success(frames.last().expect("nonempty")) {
            continue;
        }
        set.push(LabeledTrajectory {
            frames,
            label: false,
            kind,
        });
        produced += 1;
    }
    Ok(set)
}

/// Runs the configured estimator over every labeled case (each with its own
/// critic noise stream) and predicts success when its reward exceeds
/// `threshold`.
pub fn critic_fscore(
    progress: &ProgressConfig,
    critic_config: &CriticConfig,
    world: &World,
    validation_set: &[LabeledTrajectory],
    threshold: f64,
) -> Result<FScoreReport> {
    let positives = validation_set.iter().filter(|c| c.label).count();
    if positives == 0 || positives == validation_set.len() {
        return Err(Error::Argument(
            "F-score needs both success and failure cases".into(),
        ));
    }
    let critic = NoisyOracleCritic::new(world.clone(), critic_config.clone())?;
    let mut pairs = Vec::with_capacity(validation_set.len());
    for (j, case) in validation_set.iter().enumerate() {
        let c = critic.reseeded(seed::derive(critic_config.seed, "fscore", j as u64));
        let (reward, _, _) = score_frames(progress, &c, &case.frames)?;
        pairs.push((reward > threshold, case.label));
    }
    Ok(FScoreReport::from_predictions(&pairs, threshold))
}

/// Critic calls the configured estimator issues over a full-horizon
/// rollout that never terminates early.
pub fn reward_calls(config: &RunConfig) -> Result<u64> {
    let world = config.world()?;
    let frames = record(&world, 0, &[])?;
    let critic = NoisyOracleCritic::new(world, CriticConfig::noiseless())?;
    let (_, calls, terminated) = score_frames(&config.progress, &critic, &frames)?;
    debug_assert!(!terminated);
    Ok(calls)
}

/// A named configuration in an ablation table.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub config: RunConfig,
}

/// Per-seed outcome of one variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub post_bc_sr: f64,
    pub sr: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub sr: f64,
    pub f1: f64,
    pub reward_calls: u64,
    pub seeds: Vec<u64>,
    pub outcomes: Vec<SeedOutcome>,
    /// Set when the variant failed; the numeric fields are then NaN/0.
    pub error: Option<String>,
}

/// Size of each class in the F-score validation set.
pub const VALIDATION_CASES_PER_CLASS: usize = 100;

/// F-score of the configured estimator on a balanced validation set
/// generated from `seed_value`, thresholded at `tau_threshold`.
pub fn seed_fscore(config: &RunConfig, seed_value: u64) -> Result<FScoreReport> {
    let mut cfg = config.clone();
    cfg.master_seed = seed_value;
    let set = build_validation_set(&cfg, VALIDATION_CASES_PER_CLASS, VALIDATION_CASES_PER_CLASS)?;
    let mut critic = cfg.critic.clone();
    critic.seed = seed::derive(seed_value, "fscore-critic", critic.seed);
    critic_fscore(
        &cfg.progress,
        &critic,
        &cfg.world()?,
        &set,
        cfg.progress.tau_threshold,
    )
}

/// The estimator comparison: vanilla 2-frame, uniform 4- and 8-frame, and
/// accumulative, all otherwise equal to `base`.
pub fn estimator_variants(base: &RunConfig) -> Vec<Variant> {
    let with = |name: &str, kind: EstimatorKind, frames: usize| {
        let mut config = base.clone();
        config.progress.estimator = kind;
        config.progress.uniform_frames = frames;
        Variant {
            name: name.into(),
            config,
        }
    };
    let frames = base.progress.uniform_frames;
    vec![
        with("vanilla-2-frame", EstimatorKind::Vanilla, frames),
        with("uniform-4-frame", EstimatorKind::Uniform, 4),
        with("uniform-8-frame", EstimatorKind::Uniform, 8),
        with("accumulative", EstimatorKind::Accumulative, frames),
    ]
}

/// Fixed full horizon against geometric ladders with `ladders` stages, all
/// sharing `base.num_iterations` split evenly across stages.
pub fn horizon_variants(base: &RunConfig, ladders: &[u32]) -> Vec<Variant> {
    let cap = base.env.max_horizon_cap;
    let mut out = vec![Variant {
        name: "fixed-horizon".into(),
        config: RunConfig {
            schedule: HorizonSchedule::fixed(cap),
            ..base.clone()
        },
    }];
    for &n in ladders.iter().filter(|&&n| n > 1) {
        let per_stage = (base.num_iterations / u64::from(n)).max(1);
        out.push(Variant {
            name: format!("progressive-{}", n),
            config: RunConfig {
                schedule: HorizonSchedule::geometric(cap, n, per_stage),
                ..base.clone()
            },
        });
    }
    out
}

/// BC pretraining, TTT and evaluation for one config and seed. Training
/// metrics stream to `sink`.
pub fn run_seed(
    config: &RunConfig,
    seed_value: u64,
    sink: &mut dyn FnMut(&IterationMetrics),
) -> Result<SeedOutcome> {
    let mut cfg = config.clone();
    cfg.master_seed = seed_value;
    let bc = ttt::pretrain_bc(&cfg)?;
    let post_bc_sr = eval_success_rate(&bc, &cfg, cfg.eval.episodes)?;
    let (trained, _) = ttt::run_ttt(&bc, &cfg, sink)?;
    let sr = eval_success_rate(&trained, &cfg, cfg.eval.episodes)?;
    let report = seed_fscore(&cfg, seed_value)?;
    Ok(SeedOutcome {
        seed: seed_value,
        post_bc_sr,
        sr,
        f1: report.f1,
    })
}

/// Runs one variant over all seeds and averages. `sink` receives the seed
/// alongside each iteration's metrics.
pub fn run_variant(
    variant: &Variant,
    seeds: &[u64],
    sink: &mut dyn FnMut(u64, &IterationMetrics),
) -> AblationRow {
    let result = (|| -> Result<(u64, Vec<SeedOutcome>)> {
        let calls = reward_calls(&variant.config)?;
        let outcomes = seeds
            .iter()
            .map(|&s| run_seed(&variant.config, s, &mut |m| sink(s, m)))
            .collect::<Result<Vec<_>>>()?;
        Ok((calls, outcomes))
    })();
    let n = seeds.len().max(1) as f64;
    match result {
        Ok((reward_calls, outcomes)) => AblationRow {
            variant: variant.name.clone(),
            sr: outcomes.iter().map(|o| o.sr).sum::<f64>() / n,
            f1: outcomes.iter().map(|o| o.f1).sum::<f64>() / n,
            reward_calls,
            seeds: seeds.to_vec(),
            outcomes,
            error: None,
        },
        Err(e) => AblationRow {
            variant: variant.name.clone(),
            sr: f64::NAN,
            f1: f64::NAN,
            reward_calls: 0,
            seeds: seeds.to_vec(),
            outcomes: Vec::new(),
            error: Some(format!("{}", e)),
        },
    }
}

/// Every variant with the same seeds, one row each. A failing variant is
/// marked and the rest still run.
pub fn run_ablation_table(
    variants: &[Variant],
    seeds: &[u64],
    sink: &mut dyn FnMut(&str, u64, &IterationMetrics),
) -> Vec<AblationRow> {
    variants
        .iter()
        .map(|v| run_variant(v, seeds, &mut |s, m| sink(&v.name, s, m)))
        .collect()
}

/// A rollout the estimator scored as complete that the rule-based success
/// test rejects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MismatchCase {
    pub group: u64,
    pub index: usize,
    pub final_reward: f64,
    pub oracle_progress: f64,
    pub oracle_success: bool,
    pub final_step_index: u32,
}

/// Runs `groups` rollout groups of `params` with the success-criterion
/// mismatch switched on and returns every trajectory whose reward clears
/// the termination threshold while the rule-based test fails.
pub fn probe_mismatch(
    params: &PolicyParams,
    config: &RunConfig,
    groups: u64,
) -> Result<Vec<MismatchCase>> {
    let mut cfg = config.clone();
    cfg.env.mismatch_enabled = true;
    let world = cfg.world()?;
    let mut cases = Vec::new();
    for g in 0..groups {
        let batch = ttt::rollout_group(params, &cfg, cfg.env.max_horizon_cap, g)?;
        for (i, traj) in batch.trajectories.iter().enumerate() {
            let reward = traj.reward().unwrap_or(0.0);
            let success = world.oracle_success(&traj.final_observation);
            if reward > cfg.progress.tau_threshold && !success {
                cases.push(MismatchCase {
                    group: g,
                    index: i,
                    final_reward: reward,
                    oracle_progress: world.oracle_progress(&traj.final_observation),
                    oracle_success: success,
                    final_step_index: traj.final_step_index(),
                });
            }
        }
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn always_positive_on_balanced_set() {
        let pairs: Vec<(bool, bool)> = (0..200).map(|i| (true, i % 2 == 0)).collect();
        let r = FScoreReport::from_predictions(&pairs, 0.95);
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.num_success_cases, 100);
        assert_eq!(r.num_failure_cases, 100);
    }

    #[test]
    fn no_positive_predictions_give_zero() {
        assert_eq!(f1_from_counts(0, 0, 10), (0.0, 0.0, 0.0));
    }
}
