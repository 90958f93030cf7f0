//! Desk-scale test-time training for tokenized policies.
//!
//! A few scripted demonstrations pretrain a linear softmax policy, which is
//! then improved online with GRPO on rewards produced by a noisy two-frame
//! progress critic. The critic output is stabilized by milestone-based
//! accumulative progress estimation, and rollout horizons grow along a
//! staged curriculum.
//!
//! The crate is `no_std` (with `alloc`); file formats, configuration
//! loading and the command line live in the `chainttt` companion crate.

#![no_std]

extern crate alloc;

pub mod config;
pub mod critic;
pub mod curriculum;
pub mod envsim;
mod error;
pub mod evalbench;
pub mod grpo;
pub mod policy;
pub mod progress;
pub mod seed;
pub mod trajectory;
pub mod ttt;

pub use config::{EvalConfig, PolicyConfig, RunConfig};
pub use critic::{Critic, CriticConfig, CriticValue, NoisyOracleCritic};
pub use curriculum::{HorizonSchedule, HorizonStage};
pub use envsim::{Action, Cell, EnvConfig, Episode, Observation, TaskSpec, World};
pub use error::{Error, Result};
pub use grpo::{GroupBatch, GrpoConfig, UpdateStats};
pub use policy::{ActionChunk, PolicyParams};
pub use progress::{EstimatorKind, MilestoneBuffer, ProgressConfig, ProgressEstimator};
pub use trajectory::{Step, Trajectory};
pub use ttt::IterationMetrics;
