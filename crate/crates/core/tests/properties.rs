use chainttt_core::critic::true_increment;
use chainttt_core::evalbench::f1_from_counts;
use chainttt_core::grpo::{compute_advantages, population_std};
use chainttt_core::policy::{feature_dim, featurize};
use chainttt_core::progress::accumulate;
use chainttt_core::{
    Critic, CriticConfig, CriticValue, EnvConfig, HorizonSchedule, MilestoneBuffer,
    NoisyOracleCritic, Observation, PolicyParams, ProgressConfig, Result, TaskSpec, World,
};
use proptest::prelude::*;

/// Hands back a fixed list of critic values in call order.
struct Scripted(Vec<f64>);

impl Critic for Scripted {
    fn estimate(&self, _: &Observation, _: &Observation, call_index: u64) -> Result<CriticValue> {
        Ok(CriticValue::new(self.0[call_index as usize]))
    }
}

fn frame(t: u32) -> Observation {
    Observation {
        agent_pos: chainttt_core::Cell::new(0, 0),
        stage_index: 0,
        item_flags: vec![false; 3],
        gripper: false,
        step_index: t,
        closest_approach: 0,
        stage_start_distance: 0,
    }
}

/// Values stored by a buffer that checks and stores at every step.
fn stored_values(cs: &[f64]) -> Vec<f64> {
    let config = ProgressConfig {
        delta_milestone: 1,
        delta_check: 1,
        tau_threshold: 1.0,
        ..ProgressConfig::default()
    };
    let critic = Scripted(cs.to_vec());
    let mut buf = MilestoneBuffer::new(frame(0));
    for t in 1..=cs.len() as u32 {
        buf.observe(&config, &critic, &frame(t), t).unwrap();
    }
    buf.values
}

fn world(grid: u32, stages: u32, cap: u32, mismatch: bool) -> World {
    let env = EnvConfig {
        grid_size: grid,
        num_stages: stages,
        max_horizon_cap: cap,
        mismatch_enabled: mismatch,
        seed: 0,
    };
    World::new(env.clone(), TaskSpec::chain(&env)).unwrap()
}

/// Frames of a rollout driven by `tokens`, stopping at the cap.
fn walk(world: &World, episode_seed: u64, tokens: &[usize]) -> Vec<Observation> {
    let mut ep = world.reset(episode_seed);
    let mut frames = vec![ep.observation().clone()];
    for &t in tokens {
        if ep.done_by_cap() {
            break;
        }
        frames.push(ep.step(&[t]).unwrap().0);
    }
    frames
}

fn world_strategy() -> impl Strategy<Value = World> {
    (4u32..=9, 1u32..=4, any::<bool>()).prop_map(|(g, k, m)| world(g, k, 16 * k + 48, m))
}

proptest! {
    #[test]
    fn stored_values_stay_in_range(cs in prop::collection::vec(-100.0f64..=100.0, 1..40)) {
        for v in stored_values(&cs) {
            prop_assert!((0.0..=100.0).contains(&v), "{}", v);
        }
    }

    #[test]
    fn nonnegative_critics_never_lower_the_estimate(
        cs in prop::collection::vec(0.0f64..=100.0, 1..40)
    ) {
        let vs = stored_values(&cs);
        for w in vs.windows(2) {
            prop_assert!(w[1] >= w[0], "{:?}", vs);
        }
    }

    #[test]
    fn full_progress_is_a_fixed_point(c in 0.0f64..=100.0) {
        prop_assert_eq!(accumulate(100.0, c), 100.0);
    }

    #[test]
    fn advantages_are_standardized(rewards in prop::collection::vec(0.0f64..=1.0, 2..16)) {
        let a = compute_advantages(&rewards, 1e-6).unwrap();
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
        if population_std(&rewards) > 1e-6 {
            prop_assert!((population_std(&a) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn advantages_are_affine_invariant(
        rewards in prop::collection::vec(0.0f64..=1.0, 2..16),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        prop_assume!(population_std(&rewards) > 1e-3);
        let a = compute_advantages(&rewards, 1e-6).unwrap();
        let moved: Vec<f64> = rewards.iter().map(|r| scale * r + shift).collect();
        let b = compute_advantages(&moved, 1e-6).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn f1_matches_its_closed_form(tp in 0usize..500, fp in 0usize..500, fn_ in 0usize..500) {
        let (p, r, f1) = f1_from_counts(tp, fp, fn_);
        if tp == 0 {
            prop_assert_eq!(f1, 0.0);
        } else {
            let direct = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
            prop_assert!((f1 - direct).abs() < 1e-12);
            prop_assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
        }
    }

    #[test]
    fn schedules_never_shrink_and_end_at_full_horizon(
        full in 16u32..2048,
        n in 1u32..6,
        per in 1u64..20,
    ) {
        let s = HorizonSchedule::geometric(full, n, per);
        s.validate(full).unwrap();
        let mut last = 0;
        for it in 0..(u64::from(n) * per + 5) {
            let h = s.horizon_at(it).unwrap();
            prop_assert!(h >= last && h <= full);
            last = h;
        }
        prop_assert_eq!(s.horizon_at(u64::from(n) * per).unwrap(), full);
        prop_assert_eq!(s.horizon_at(u64::MAX).unwrap(), full);
    }

    #[test]
    fn slot_distributions_are_normalized(
        weights_seed in any::<u64>(),
        slots in 1usize..4,
        temperature in 0.1f64..5.0,
        tokens in prop::collection::vec(0usize..6, 0..30),
    ) {
        let w = world(6, 3, 96, false);
        let frames = walk(&w, weights_seed, &tokens);
        let params = random_params(&w, slots, weights_seed, 3.0);
        for obs in &frames {
            let lp = params.log_probs(&featurize(&w, obs), temperature).unwrap();
            for slot in lp.chunks(6) {
                let total: f64 = slot.iter().map(|l| l.exp()).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_chunks_score_their_own_log_prob(
        weights_seed in any::<u64>(),
        rng_seed in any::<u64>(),
        slots in 1usize..5,
        temperature in 0.2f64..3.0,
    ) {
        let w = world(5, 2, 64, false);
        let params = random_params(&w, slots, weights_seed, 2.0);
        let phi = featurize(&w, w.reset(rng_seed).observation());
        let chunk = params.sample_chunk(&phi, temperature, rng_seed).unwrap();
        prop_assert_eq!(chunk.tokens.len(), slots);
        prop_assert_eq!(params.log_prob(&phi, &chunk.tokens, temperature).unwrap(), chunk.log_prob);
    }

    #[test]
    fn greedy_choice_ignores_temperature(
        weights_seed in any::<u64>(),
        t1 in 0.05f64..10.0,
        t2 in 0.05f64..10.0,
    ) {
        let w = world(5, 2, 64, false);
        let params = random_params(&w, 2, weights_seed, 2.0);
        let phi = featurize(&w, w.reset(weights_seed).observation());
        let argmax = |t: f64| -> Vec<usize> {
            params
                .log_probs(&phi, t)
                .unwrap()
                .chunks(6)
                .map(|s| {
                    let mut best = 0;
                    for (i, v) in s.iter().enumerate() {
                        if *v > s[best] {
                            best = i;
                        }
                    }
                    best
                })
                .collect()
        };
        prop_assert_eq!(argmax(t1), argmax(t2));
        prop_assert_eq!(argmax(t1), params.greedy_chunk(&phi).unwrap());
    }

    #[test]
    fn progress_is_monotone_on_any_rollout(
        w in world_strategy(),
        episode_seed in any::<u64>(),
        tokens in prop::collection::vec(0usize..6, 0..120),
    ) {
        let frames = walk(&w, episode_seed, &tokens);
        for pair in frames.windows(2) {
            prop_assert!(w.oracle_progress(&pair[1]) >= w.oracle_progress(&pair[0]));
        }
    }

    #[test]
    fn expert_progress_is_monotone_and_complete(w in world_strategy(), episode_seed in any::<u64>()) {
        let actions = w.expert_actions(episode_seed).unwrap();
        let tokens: Vec<usize> = actions.iter().map(|a| a.token()).collect();
        let frames = walk(&w, episode_seed, &tokens);
        for pair in frames.windows(2) {
            prop_assert!(w.oracle_progress(&pair[1]) >= w.oracle_progress(&pair[0]));
        }
        prop_assert_eq!(w.oracle_progress(frames.last().unwrap()), 100.0);
    }

    #[test]
    fn success_iff_full_progress_without_mismatch(
        w in world_strategy(),
        episode_seed in any::<u64>(),
        tokens in prop::collection::vec(0usize..6, 0..120),
        follow_expert in any::<bool>(),
    ) {
        let w = w.with_mismatch(false);
        let tokens = if follow_expert {
            w.expert_actions(episode_seed).unwrap().iter().map(|a| a.token()).collect()
        } else {
            tokens
        };
        for obs in walk(&w, episode_seed, &tokens) {
            prop_assert_eq!(w.oracle_success(&obs), w.oracle_progress(&obs) == 100.0);
        }
    }

    #[test]
    fn replaying_actions_is_deterministic(
        w in world_strategy(),
        episode_seed in any::<u64>(),
        tokens in prop::collection::vec(0usize..6, 0..80),
    ) {
        prop_assert_eq!(walk(&w, episode_seed, &tokens), walk(&w, episode_seed, &tokens));
    }

    #[test]
    fn noiseless_critic_reports_the_true_increment(
        w in world_strategy(),
        episode_seed in any::<u64>(),
        tokens in prop::collection::vec(0usize..6, 1..80),
        i in any::<prop::sample::Index>(),
        j in any::<prop::sample::Index>(),
    ) {
        let frames = walk(&w, episode_seed, &tokens);
        let (a, b) = (&frames[i.index(frames.len())], &frames[j.index(frames.len())]);
        let critic = NoisyOracleCritic::new(w.clone(), CriticConfig::noiseless()).unwrap();
        prop_assert_eq!(critic.estimate(a, b, 7).unwrap().value(), true_increment(&w, a, b));
    }

    #[test]
    fn folding_true_increments_telescopes_to_final_progress(
        w in world_strategy(),
        episode_seed in any::<u64>(),
        tokens in prop::collection::vec(0usize..6, 0..120),
        use_expert in any::<bool>(),
    ) {
        let tokens = if use_expert {
            w.expert_actions(episode_seed).unwrap().iter().map(|a| a.token()).collect()
        } else {
            tokens
        };
        let frames = walk(&w, episode_seed, &tokens);
        let mut v = 0.0;
        for pair in frames.windows(2) {
            v = accumulate(v, true_increment(&w, &pair[0], &pair[1]));
        }
        prop_assert_eq!(w.oracle_progress(&frames[0]), 0.0);
        let expected = w.oracle_progress(frames.last().unwrap());
        prop_assert!((v - expected).abs() < 1e-9, "{} vs {}", v, expected);
    }

    #[test]
    fn estimates_are_clamped(
        sigma in 0.0f64..500.0,
        bias in -300.0f64..300.0,
        drift in 0.0f64..5.0,
        flip in 0.0f64..0.99,
        seed in any::<u64>(),
        call in any::<u64>(),
        gap in 0u32..400,
    ) {
        let w = world(6, 2, 512, false);
        let config = CriticConfig { sigma, bias, drift_per_step: drift, flip_prob: flip, seed };
        let critic = NoisyOracleCritic::new(w.clone(), config).unwrap();
        let mut a = frame(0);
        let mut b = frame(gap);
        a.item_flags = vec![false; 2];
        b.item_flags = vec![false; 2];
        let v = critic.estimate(&a, &b, call).unwrap().value();
        prop_assert!(v.abs() <= 100.0);
        prop_assert_eq!(v, critic.estimate(&a, &b, call).unwrap().value());
    }
}

fn random_params(world: &World, slots: usize, seed: u64, scale: f64) -> PolicyParams {
    use rand::Rng;
    let mut rng = chainttt_core::seed::rng(seed);
    let n = slots * 6 * feature_dim(world);
    let weights = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    PolicyParams::from_weights(slots, 6, feature_dim(world), weights).unwrap()
}
