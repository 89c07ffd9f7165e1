//! Multi-objective group-relative policy optimization.
//!
//! The crate is organised bottom-up:
//!
//! - [`advantage`]: GRPO, Dr. GRPO and MO-GRPO advantage estimators.
//! - [`theory`]: closed-form advantage/reward correlations and Monte-Carlo checks.
//! - [`envs`]: a 3-objective bandit and a 4-target planar reacher.
//! - [`policy`]: MLP softmax policy, AdamW and checkpoints.
//! - [`trainer`]: the clipped group-relative training loop.
//! - [`experiments`]: run configuration, batch runners and reports used by the CLI.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod advantage;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod policy;
pub mod rng;
pub mod theory;
pub mod trainer;

pub use advantage::{AdvantageVector, Estimator, RewardMatrix, STD_EPS};
pub use error::{Error, Result};
pub use rng::{derive_seed, SimRng};
pub use theory::CovSpec;
pub use trainer::{train, EnvSpec, MetricsLog, TrainConfig, Trainer};
