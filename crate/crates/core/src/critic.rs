//! Two-frame progress critic.
//!
//! The critic answers "how much of the remaining task did frame b complete,
//! relative to frame a", in [-100, 100]. [`NoisyOracleCritic`] computes the
//! exact answer from simulator progress and corrupts it with i.i.d. noise,
//! a systematic bias, noise that grows with the temporal gap between the
//! frames, and occasional sign flips.

use alloc::format;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envsim::{Observation, World};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticConfig {
    pub sigma: f64,
    pub bias: f64,
    pub drift_per_step: f64,
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            bias: 0.0,
            drift_per_step: 0.0,
            flip_prob: 0.0,
            seed: 0,
        }
    }
}

impl CriticConfig {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("critic.sigma must be >= 0".into()));
        }
        if !(self.drift_per_step >= 0.0 && self.drift_per_step.is_finite()) {
            return Err(Error::Config("critic.drift_per_step must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.flip_prob) {
            return Err(Error::Config("critic.flip_prob must lie in [0, 1)".into()));
        }
        if !self.bias.is_finite() {
            return Err(Error::Config("critic.bias must be finite".into()));
        }
        Ok(())
    }

    /// Noise standard deviation for a pair of frames `gap` steps apart.
    pub fn noise_std(&self, gap: u32) -> f64 {
        let drift = self.drift_per_step * f64::from(gap);
        libm::sqrt(self.sigma * self.sigma + drift * drift)
    }
}

/// A critic output, clamped to [-100, 100].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CriticValue(f64);

impl CriticValue {
    pub fn new(value: f64) -> Self {
        Self(value.clamp(-100.0, 100.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Anything that can score progress between two frames.
///
/// `call_index` identifies the query; implementations that add noise must
/// make it a pure function of their seed and the index.
pub trait Critic {
    fn estimate(
        &self,
        frame_a: &Observation,
        frame_b: &Observation,
        call_index: u64,
    ) -> Result<CriticValue>;
}

impl<C: Critic + ?Sized> Critic for &C {
    fn estimate(&self, a: &Observation, b: &Observation, call_index: u64) -> Result<CriticValue> {
        (**self).estimate(a, b, call_index)
    }
}

/// Fraction of the remaining task completed between the frames, times 100.
/// Zero when frame a is already complete.
pub fn true_increment(world: &World, frame_a: &Observation, frame_b: &Observation) -> f64 {
    remaining_fraction(
        world.oracle_progress(frame_a),
        world.oracle_progress(frame_b),
    )
}

/// `100 * (pb - pa) / (100 - pa)` on progress values, clamped to
/// [-100, 100]; zero once `pa` is complete.
pub fn remaining_fraction(pa: f64, pb: f64) -> f64 {
    if pa >= 100.0 {
        return 0.0;
    }
    (100.0 * (pb - pa) / (100.0 - pa)).clamp(-100.0, 100.0)
}

#[derive(Debug, Clone)]
pub struct NoisyOracleCritic {
    world: World,
    config: CriticConfig,
}

impl NoisyOracleCritic {
    pub fn new(world: World, config: CriticConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { world, config })
    }

    pub fn config(&self) -> &CriticConfig {
        &self.config
    }

    /// Same critic with its noise stream reseeded.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.config.seed = seed;
        c
    }
}

impl Critic for NoisyOracleCritic {
    fn estimate(&self, a: &Observation, b: &Observation, call_index: u64) -> Result<CriticValue> {
        let truth = true_increment(&self.world, a, b);
        let cfg = &self.config;
        let gap = a.step_index.abs_diff(b.step_index);
        let std = cfg.noise_std(gap);
        let mut value = truth + cfg.bias;
        if std > 0.0 || cfg.flip_prob > 0.0 {
            let mut rng = seed::rng(seed::derive(cfg.seed, "critic-call", call_index));
            let eps: f64 = rng.sample(StandardNormal);
            let flip: f64 = rng.random();
            value += std * eps;
            if flip < cfg.flip_prob {
                value = -value;
            }
        }
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "critic produced a non-finite value at call {}",
                call_index
            )));
        }
        Ok(CriticValue::new(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{Action, EnvConfig, TaskSpec};
    use alloc::vec::Vec;

    fn world() -> World {
        let config = EnvConfig {
            grid_size: 8,
            num_stages: 2,
            max_horizon_cap: 512,
            ..EnvConfig::default()
        };
        World::new(config.clone(), TaskSpec::chain(&config)).unwrap()
    }

    fn frame_with_progress(w: &World, stage: usize, step: u32) -> Observation {
        let mut o = w.reset(0).observation().clone();
        o.stage_index = stage;
        for f in o.item_flags.iter_mut().take(stage) {
            *f = true;
        }
        o.closest_approach = 14;
        o.stage_start_distance = 14;
        o.step_index = step;
        o
    }

    #[test]
    fn identical_frames_have_zero_increment() {
        let w = world();
        let o = w.reset(3).observation().clone();
        assert_eq!(true_increment(&w, &o, &o), 0.0);
    }

    #[test]
    fn increment_values() {
        let w = world();
        // stage 0 at max distance: p = 0; stage 1 at max distance: p = 50.
        let p0 = frame_with_progress(&w, 0, 0);
        let p50 = frame_with_progress(&w, 1, 10);
        let p100 = frame_with_progress(&w, 2, 20);
        assert_eq!(w.oracle_progress(&p0), 0.0);
        assert_eq!(w.oracle_progress(&p50), 50.0);
        assert_eq!(true_increment(&w, &p0, &p100), 100.0);
        assert_eq!(remaining_fraction(50.0, 75.0), 50.0);
        assert_eq!(true_increment(&w, &p50, &p100), 100.0);
        assert_eq!(true_increment(&w, &p100, &p100), 0.0);
        assert_eq!(true_increment(&w, &p50, &p0), -100.0);
    }

    #[test]
    fn zero_noise_is_exact() {
        let w = world();
        let critic = NoisyOracleCritic::new(w.clone(), CriticConfig::noiseless()).unwrap();
        let mut ep = w.reset(1);
        let a = ep.observation().clone();
        for i in 0..30u64 {
            let (b, _) = ep.step(&[Action::Right.token()]).unwrap();
            let v = critic.estimate(&a, &b, i).unwrap().value();
            assert_eq!(v, true_increment(&w, &a, &b));
        }
    }

    #[test]
    fn clamp_and_replay() {
        let w = world();
        let cfg = CriticConfig {
            sigma: 80.0,
            bias: 30.0,
            drift_per_step: 1.0,
            flip_prob: 0.3,
            seed: 5,
        };
        let critic = NoisyOracleCritic::new(w.clone(), cfg).unwrap();
        let a = frame_with_progress(&w, 0, 0);
        let b = frame_with_progress(&w, 1, 300);
        for i in 0..500 {
            let v = critic.estimate(&a, &b, i).unwrap();
            assert!(v.value().abs() <= 100.0);
            assert_eq!(v, critic.estimate(&a, &b, i).unwrap());
        }
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            CriticConfig {
                sigma: -1.0,
                ..CriticConfig::default()
            },
            CriticConfig {
                drift_per_step: -0.1,
                ..CriticConfig::default()
            },
            CriticConfig {
                flip_prob: 1.0,
                ..CriticConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    fn sample_std(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn noise_grows_with_gap() {
        // Frames at stage 1 of 2 with 50 progress; identical progress, so the
        // truth is 0 and the clamp does not bind for std 20.
        let w = world();
        let cfg = CriticConfig {
            drift_per_step: 0.1,
            seed: 42,
            ..CriticConfig::default()
        };
        let critic = NoisyOracleCritic::new(w.clone(), cfg).unwrap();
        let a = frame_with_progress(&w, 1, 0);
        for (gap, expected) in [(200u32, 20.0), (10, 1.0)] {
            let b = frame_with_progress(&w, 1, gap);
            let vals: Vec<f64> = (0..10_000)
                .map(|i| critic.estimate(&a, &b, i).unwrap().value())
                .collect();
            let s = sample_std(&vals);
            assert!((s / expected - 1.0).abs() < 0.05, "gap {}: std {}", gap, s);
        }
    }
}
