use serde::{Deserialize, Serialize};

use super::{Environment, Transition};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const NUM_ACTIONS: usize = 9;
pub const OBSERVATION_DIM: usize = 6;
pub const NUM_TARGETS: usize = 4;

/// Target radius at which the best constant-velocity sweep scores 1.76 total
/// reward per step with the default arm (see [`calibrate_target_radius`]).
pub const DEFAULT_TARGET_RADIUS: f64 = 0.352_964_3;

/// Kinematic two-link arm. Torques change joint velocities directly (no mass
/// matrix): `ω ← clamp(ω + gain·τ, ±ω_max)`, `θ ← θ + ω·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReacherConfig {
    pub link_lengths: [f64; 2],
    /// Velocity change per unit torque per step (rad/step²).
    pub torque_gain: f64,
    /// Joint speed limit (rad/step).
    pub max_velocity: f64,
    pub dt: f64,
    pub horizon: usize,
    /// Targets sit at `(±r, 0)` and `(0, ±r)`.
    pub target_radius: f64,
    /// Standard deviation of Gaussian noise added to the observed R1.
    pub r1_noise_std: f64,
}

impl Default for ReacherConfig {
    fn default() -> Self {
        Self {
            link_lengths: [0.1, 0.1],
            torque_gain: 0.2,
            max_velocity: 1.0,
            dt: 1.0,
            horizon: 50,
            target_radius: DEFAULT_TARGET_RADIUS,
            r1_noise_std: 0.0,
        }
    }
}

impl ReacherConfig {
    /// Targets in order `+x, +y, -x, -y`.
    pub fn targets(&self) -> [[f64; 2]; NUM_TARGETS] {
        let r = self.target_radius;
        [[r, 0.0], [0.0, r], [-r, 0.0], [0.0, -r]]
    }

    pub fn end_effector(&self, theta: [f64; 2]) -> [f64; 2] {
        let [l1, l2] = self.link_lengths;
        let a = theta[0] + theta[1];
        [
            l1 * theta[0].cos() + l2 * a.cos(),
            l1 * theta[0].sin() + l2 * a.sin(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.link_lengths.iter().all(|l| *l > 0.0)
            && self.torque_gain > 0.0
            && self.max_velocity > 0.0
            && self.dt > 0.0
            && self.horizon > 0
            && self.target_radius >= 0.0
            && self.r1_noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid reacher config {self:?}")))
        }
    }
}

/// Per-target rewards `R_i = 1 - 4‖p_arm - p_target,i‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardQuad(pub [f64; NUM_TARGETS]);

impl RewardQuad {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

pub fn reacher_reward(p_arm: [f64; 2], targets: &[[f64; 2]; NUM_TARGETS]) -> RewardQuad {
    RewardQuad(targets.map(|t| {
        let (dx, dy) = (p_arm[0] - t[0], p_arm[1] - t[1]);
        1.0 - 4.0 * (dx * dx + dy * dy)
    }))
}

/// Torque pair for a discrete action: `(a / 3 - 1, a % 3 - 1)`.
pub fn decode_action(action: usize) -> Result<[f64; 2]> {
    if action >= NUM_ACTIONS {
        return Err(Error::ActionOutOfRange {
            action,
            actions: NUM_ACTIONS,
        });
    }
    Ok([(action / 3) as f64 - 1.0, (action % 3) as f64 - 1.0])
}

#[derive(Debug, Clone)]
pub struct ReacherEnv {
    config: ReacherConfig,
    targets: [[f64; 2]; NUM_TARGETS],
    theta: [f64; 2],
    omega: [f64; 2],
    step: usize,
    rng: SimRng,
}

impl ReacherEnv {
    pub fn new(config: ReacherConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            targets: config.targets(),
            config,
            theta: [0.0; 2],
            omega: [0.0; 2],
            step: 0,
            rng: SimRng::new(seed),
        })
    }

    pub fn config(&self) -> &ReacherConfig {
        &self.config
    }

    pub fn targets(&self) -> &[[f64; 2]; NUM_TARGETS] {
        &self.targets
    }

    pub fn joint_angles(&self) -> [f64; 2] {
        self.theta
    }

    pub fn joint_velocities(&self) -> [f64; 2] {
        self.omega
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.horizon
    }

    pub fn end_effector(&self) -> [f64; 2] {
        self.config.end_effector(self.theta)
    }

    /// Arm folded out along +x at rest; returns the initial observation.
    pub fn reset(&mut self) -> Vec<f64> {
        self.theta = [0.0; 2];
        self.omega = [0.0; 2];
        self.step = 0;
        self.observation()
    }

    /// Resets and reseeds the observation-noise stream.
    pub fn reset_with_seed(&mut self, seed: u64) -> Vec<f64> {
        self.rng = SimRng::new(seed);
        self.reset()
    }

    pub fn observation(&self) -> Vec<f64> {
        let [t1, t2] = self.theta;
        vec![
            t1.sin(),
            t1.cos(),
            t2.sin(),
            t2.cos(),
            self.omega[0],
            self.omega[1],
        ]
    }

    /// Applies `action` and returns the new observation, the per-target
    /// rewards (R1 includes the configured observation noise) and `done`.
    pub fn step_action(&mut self, action: usize) -> Result<(Vec<f64>, RewardQuad, bool)> {
        let torque = decode_action(action)?;
        if self.is_done() {
            return Err(Error::EpisodeExhausted(self.config.horizon));
        }
        let c = &self.config;
        for j in 0..2 {
            self.omega[j] =
                (self.omega[j] + c.torque_gain * torque[j]).clamp(-c.max_velocity, c.max_velocity);
            self.theta[j] += self.omega[j] * c.dt;
        }
        self.step += 1;
        let mut rewards = reacher_reward(self.end_effector(), &self.targets);
        if self.config.r1_noise_std > 0.0 {
            rewards.0[0] += self.config.r1_noise_std * self.rng.normal();
        }
        Ok((self.observation(), rewards, self.is_done()))
    }
}

impl Environment for ReacherEnv {
    fn observation_dim(&self) -> usize {
        OBSERVATION_DIM
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn num_objectives(&self) -> usize {
        NUM_TARGETS
    }

    fn begin(&mut self) -> Vec<f64> {
        self.reset()
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        let (observation, rewards, done) = self.step_action(action)?;
        Ok(Transition {
            observation,
            rewards: rewards.0.to_vec(),
            done,
        })
    }
}

/// Best open-loop sweep at constant joint velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepResult {
    /// Mean total reward per step.
    pub score: f64,
    pub omega: [f64; 2],
}

/// Brute-force search over constant joint velocities `ω ∈ [-ω_max, ω_max]²`
/// on a `grid × grid` lattice. The arm starts at `θ = 0` and moves
/// `θ(t) = ω t` for the configured horizon; observation noise is ignored.
pub fn constant_velocity_sweep(config: &ReacherConfig, grid: usize) -> SweepResult {
    let targets = config.targets();
    let grid = grid.max(2);
    let axis: Vec<f64> = (0..grid)
        .map(|i| -config.max_velocity + 2.0 * config.max_velocity * i as f64 / (grid - 1) as f64)
        .collect();
    let mut best = SweepResult {
        score: f64::NEG_INFINITY,
        omega: [0.0; 2],
    };
    for &w1 in &axis {
        for &w2 in &axis {
            let mut sum = 0.0;
            for t in 1..=config.horizon {
                let s = t as f64 * config.dt;
                sum += reacher_reward(config.end_effector([w1 * s, w2 * s]), &targets).total();
            }
            let score = sum / config.horizon as f64;
            if score > best.score {
                best = SweepResult {
                    score,
                    omega: [w1, w2],
                };
            }
        }
    }
    best
}

/// Bisects the target radius so the best constant-velocity sweep scores `target_score`.
pub fn calibrate_target_radius(
    config: &ReacherConfig,
    target_score: f64,
    grid: usize,
) -> Result<f64> {
    let score_at = |r: f64| {
        let cfg = ReacherConfig {
            target_radius: r,
            ..config.clone()
        };
        constant_velocity_sweep(&cfg, grid).score
    };
    let (mut lo, mut hi) = (0.0, 2.0);
    if score_at(lo) < target_score || score_at(hi) > target_score {
        return Err(Error::Config(format!(
            "score {target_score} not bracketed by radius [0, 2]"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if score_at(mid) > target_score {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
