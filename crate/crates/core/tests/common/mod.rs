#![allow(dead_code, clippy::needless_range_loop)]

use mogrpo_core::advantage::{AdvantageVector, RewardMatrix};
use mogrpo_core::envs::Environment;
use mogrpo_core::policy::PolicyParams;
use mogrpo_core::trainer::{collect_group, returns_to_reward_matrix, GroupSample};
use mogrpo_core::{Estimator, SimRng};

pub const FD_STEP: f64 = 1e-5;
/// Components smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-4;

/// Largest relative gap between `analytic` and central differences of `f`.
pub fn fd_max_rel_error(
    params: &PolicyParams,
    analytic: &[f64],
    f: impl Fn(&PolicyParams) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus.values_mut()[i] += FD_STEP;
        let mut minus = params.clone();
        minus.values_mut()[i] -= FD_STEP;
        let fd = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
        let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    worst
}

/// `params` plus independent N(0, scale²) noise on every entry.
pub fn perturbed(params: &PolicyParams, scale: f64, seed: u64) -> PolicyParams {
    let mut rng = SimRng::new(seed);
    let mut out = params.clone();
    out.values_mut()
        .iter_mut()
        .for_each(|v| *v += scale * rng.normal());
    out
}

pub struct SurrogateFixture {
    pub group: GroupSample,
    pub policy: PolicyParams,
    pub reference: PolicyParams,
    pub advantages: AdvantageVector,
}

/// Collects a group with a fresh reference and moves the policy away from it
/// so that ratios differ from one and some are clipped.
pub fn surrogate_fixture(
    env: &mut dyn Environment,
    hidden: &[usize],
    estimator: Estimator,
    perturbation: f64,
    seed: u64,
) -> SurrogateFixture {
    let mut sizes = vec![env.observation_dim()];
    sizes.extend(hidden);
    sizes.push(env.num_actions());
    let reference = perturbed(
        &PolicyParams::init(&sizes, Default::default(), seed).unwrap(),
        0.5,
        seed + 1,
    );
    let group = collect_group(env, &reference, 8, &mut SimRng::new(seed + 2)).unwrap();
    let advantages = estimator.advantages(&returns_to_reward_matrix(&group).unwrap(), false);
    let policy = perturbed(&reference, perturbation, seed + 3);
    SurrogateFixture {
        group,
        policy,
        reference,
        advantages,
    }
}

/// Scalar-loop GRPO: standardize the row sums with the population std.
pub fn oracle_grpo(r: &RewardMatrix) -> Vec<f64> {
    let g = r.group_size();
    let mut sums = vec![0.0; g];
    for i in 0..g {
        for j in 0..r.num_objectives() {
            sums[i] += r.get(i, j);
        }
    }
    oracle_standardize(&sums)
}

pub fn oracle_standardize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mut mean = 0.0;
    for x in xs {
        mean += x;
    }
    mean /= n;
    let mut var = 0.0;
    for x in xs {
        var += (x - mean) * (x - mean);
    }
    let std = (var / n).sqrt();
    xs.iter().map(|x| (x - mean) / (std + 1e-6)).collect()
}

pub fn oracle_mogrpo(r: &RewardMatrix) -> Vec<f64> {
    let (g, k) = (r.group_size(), r.num_objectives());
    let mut out = vec![0.0; g];
    for j in 0..k {
        let col: Vec<f64> = (0..g).map(|i| r.get(i, j)).collect();
        for (o, z) in out.iter_mut().zip(oracle_standardize(&col)) {
            *o += z;
        }
    }
    out
}
