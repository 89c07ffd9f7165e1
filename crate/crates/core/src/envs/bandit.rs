use serde::{Deserialize, Serialize};

use super::{Environment, Transition};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Noise standard deviations of R1, R2, R3.
pub const NOISE_STDS: [f64; 3] = [10.0, 1.0, 0.1];
/// R2 subtracts this multiple of the realized R1.
pub const R1_COUPLING: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    pub arms: usize,
    /// Number of pulls before the episode is exhausted.
    pub episode_length: usize,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            arms: 50,
            episode_length: 5000,
        }
    }
}

/// Rewards of one pull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTriple {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl RewardTriple {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.r1, self.r2, self.r3]
    }

    pub fn total(self) -> f64 {
        self.r1 + self.r2 + self.r3
    }
}

/// K-armed bandit with three correlated, differently scaled rewards.
///
/// Arm `k` has a mean `μ_k ~ N(0, 1)` fixed for the episode; a pull returns
/// `r1 = μ + n1`, `r2 = μ + n2 - 0.1 r1`, `r3 = μ + n3` with noise standard
/// deviations 10, 1 and 0.1.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    arm_means: Vec<f64>,
    episode_length: usize,
    step_count: usize,
    noise_scale: f64,
    rng: SimRng,
}

impl BanditEnv {
    pub fn new(config: &BanditConfig, seed: u64) -> Result<Self> {
        if config.arms == 0 {
            return Err(Error::Config("bandit needs at least one arm".into()));
        }
        let mut means_rng = SimRng::substream(seed, 0);
        let arm_means = (0..config.arms).map(|_| means_rng.normal()).collect();
        Ok(Self {
            arm_means,
            episode_length: config.episode_length,
            step_count: 0,
            noise_scale: 1.0,
            rng: SimRng::substream(seed, 1),
        })
    }

    /// Default 50-armed, 5000-pull bandit.
    pub fn with_seed(seed: u64) -> Self {
        Self::new(&BanditConfig::default(), seed).expect("default config is valid")
    }

    /// Test hook: removes all reward noise.
    pub fn with_zero_noise(mut self) -> Self {
        self.noise_scale = 0.0;
        self
    }

    pub fn arm_means(&self) -> &[f64] {
        &self.arm_means
    }

    pub fn arms(&self) -> usize {
        self.arm_means.len()
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn episode_length(&self) -> usize {
        self.episode_length
    }

    pub fn is_done(&self) -> bool {
        self.step_count >= self.episode_length
    }

    /// Expected reward of each objective for `arm`.
    pub fn expected_rewards(&self, arm: usize) -> [f64; 3] {
        let mu = self.arm_means[arm];
        [mu, (1.0 - R1_COUPLING) * mu, mu]
    }

    pub fn pull(&mut self, arm: usize) -> Result<RewardTriple> {
        if arm >= self.arms() {
            return Err(Error::ArmOutOfRange {
                arm,
                arms: self.arms(),
            });
        }
        if self.is_done() {
            return Err(Error::EpisodeExhausted(self.episode_length));
        }
        self.step_count += 1;
        let mu = self.arm_means[arm];
        let noise = [self.rng.normal(), self.rng.normal(), self.rng.normal()];
        let s = self.noise_scale;
        let r1 = mu + s * NOISE_STDS[0] * noise[0];
        let r2 = mu + s * NOISE_STDS[1] * noise[1] - R1_COUPLING * r1;
        let r3 = mu + s * NOISE_STDS[2] * noise[2];
        Ok(RewardTriple { r1, r2, r3 })
    }
}

impl Environment for BanditEnv {
    fn observation_dim(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        self.arms()
    }

    fn num_objectives(&self) -> usize {
        3
    }

    /// The bandit is stateless; the policy sees the constant input 1.
    fn begin(&mut self) -> Vec<f64> {
        vec![1.0]
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        if action >= self.arms() {
            return Err(Error::ActionOutOfRange {
                action,
                actions: self.arms(),
            });
        }
        let r = self.pull(action)?;
        Ok(Transition {
            observation: vec![1.0],
            rewards: r.to_vec(),
            done: true,
        })
    }
}
