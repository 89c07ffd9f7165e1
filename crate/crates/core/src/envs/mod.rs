//! Multi-objective environments with discrete actions.

mod bandit;
mod reacher;

pub use bandit::{BanditConfig, BanditEnv, RewardTriple};
pub use reacher::{
    calibrate_target_radius, constant_velocity_sweep, decode_action, reacher_reward, ReacherConfig,
    ReacherEnv, RewardQuad, SweepResult, DEFAULT_TARGET_RADIUS, NUM_ACTIONS, NUM_TARGETS,
    OBSERVATION_DIM,
};

use crate::error::Result;

/// Outcome of a single environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    /// One reward per objective.
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// An environment the trainer can roll trajectories in.
///
/// `begin` starts a new trajectory from the environment's shared initial
/// condition; every trajectory of a group starts from the same state.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn num_objectives(&self) -> usize;
    fn begin(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<Transition>;
}
