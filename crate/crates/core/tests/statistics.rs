//! Moment checks on the samplers and environments.

use mogrpo_core::envs::{
    reacher_reward, BanditConfig, BanditEnv, ReacherConfig, ReacherEnv, NUM_ACTIONS,
};
use mogrpo_core::theory::{sample_rewards, CovSpec};
use mogrpo_core::SimRng;
use proptest::prelude::*;

fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / n
}

#[test]
fn sampled_covariance_matches_spec() {
    // Variances up to 4 keep three standard errors of each entry under 0.05.
    let spec = CovSpec::diagonal(vec![1.0, -2.0, 0.5], &[1.0, 2.0, 0.5]).unwrap();
    let r = sample_rewards(&spec, 1_000_000, 3).unwrap();
    let cols: Vec<Vec<f64>> = (0..3).map(|j| r.column(j).collect()).collect();
    for i in 0..3 {
        let mean = cols[i].iter().sum::<f64>() / cols[i].len() as f64;
        assert!((mean - spec.means[i]).abs() < 0.01, "mean {i}: {mean}");
        for j in 0..3 {
            let c = covariance(&cols[i], &cols[j]);
            assert!((c - spec.cov[i][j]).abs() < 0.05, "cov[{i}][{j}] = {c}");
        }
    }
}

#[test]
fn sampled_correlated_covariance_within_three_standard_errors() {
    let spec = CovSpec::bandit();
    let n = 1_000_000;
    let r = sample_rewards(&spec, n, 4).unwrap();
    let cols: Vec<Vec<f64>> = (0..3).map(|j| r.column(j).collect()).collect();
    for i in 0..3 {
        for j in 0..3 {
            let c = &spec.cov;
            // Var of a Gaussian sample covariance: (σ_ii σ_jj + σ_ij²) / n.
            let se = ((c[i][i] * c[j][j] + c[i][j] * c[i][j]) / n as f64).sqrt();
            let got = covariance(&cols[i], &cols[j]);
            assert!(
                (got - c[i][j]).abs() < 3.0 * se,
                "cov[{i}][{j}] = {got}, se {se}"
            );
        }
    }
}

#[test]
fn arm_means_are_standard_normal() {
    let mut all = Vec::with_capacity(100_000 * 50);
    for seed in 0..100_000u64 {
        all.extend_from_slice(BanditEnv::with_seed(seed).arm_means());
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let std = (all.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 0.02, "{mean}");
    assert!((std - 1.0).abs() < 0.02, "{std}");
}

#[test]
fn pull_noise_matches_reward_model() {
    let n = 1_000_000;
    let mut env = BanditEnv::new(
        &BanditConfig {
            arms: 5,
            episode_length: n,
        },
        8,
    )
    .unwrap();
    let mu = env.arm_means()[2];
    let (mut r1, mut r2, mut r3) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let p = env.pull(2).unwrap();
        r1.push(p.r1);
        r2.push(p.r2);
        r3.push(p.r3);
    }
    assert!(env.pull(2).is_err());
    let nf = n as f64;
    let means = [&r1, &r2, &r3].map(|v| v.iter().sum::<f64>() / nf);
    assert!(
        (means[0] - mu).abs() < 0.05
            && (means[1] - 0.9 * mu).abs() < 0.01
            && (means[2] - mu).abs() < 0.001
    );

    let cov12 = covariance(&r1, &r2);
    assert!((cov12 + 10.0).abs() < 0.5, "{cov12}");
    assert!((covariance(&r1, &r1).sqrt() - 10.0).abs() < 0.05);
    assert!((covariance(&r3, &r3).sqrt() - 0.1).abs() < 0.001);

    let analytic = CovSpec::bandit();
    let cols = [&r1, &r2, &r3];
    for i in 0..3 {
        for j in 0..3 {
            let c = &analytic.cov;
            let se = ((c[i][i] * c[j][j] + c[i][j] * c[i][j]) / nf).sqrt();
            let got = covariance(cols[i], cols[j]);
            assert!((got - c[i][j]).abs() < 3.0 * se, "cov[{i}][{j}] = {got}");
        }
    }
}

#[test]
fn zero_noise_total_ranks_like_arm_means() {
    for seed in 0..20 {
        let mut env = BanditEnv::with_seed(seed).with_zero_noise();
        let totals: Vec<f64> = (0..env.arms())
            .map(|a| env.pull(a).unwrap().total())
            .collect();
        let best_total = (0..totals.len())
            .max_by(|&a, &b| totals[a].total_cmp(&totals[b]))
            .unwrap();
        let means = env.arm_means();
        let best_mean = (0..means.len())
            .max_by(|&a, &b| means[a].total_cmp(&means[b]))
            .unwrap();
        assert_eq!(best_total, best_mean);
        for (t, m) in totals.iter().zip(means) {
            assert!((t - 2.9 * m).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn reacher_total_depends_only_on_distance(x in -0.3f64..0.3, y in -0.3f64..0.3, r in 0.05f64..1.0) {
        let cfg = ReacherConfig { target_radius: r, ..Default::default() };
        let total = reacher_reward([x, y], &cfg.targets()).total();
        let expect = 4.0 - 16.0 * (x * x + y * y) - 16.0 * r * r;
        prop_assert!((total - expect).abs() < 1e-12);
    }

    #[test]
    fn reacher_rollouts_stay_in_range(seed in 0u64..1000) {
        let mut env = ReacherEnv::new(ReacherConfig::default(), seed).unwrap();
        let mut rng = SimRng::new(seed);
        env.reset();
        loop {
            let (obs, r, done) = env.step_action((rng.next_u64() % NUM_ACTIONS as u64) as usize).unwrap();
            prop_assert!(r.0.iter().all(|v| *v <= 1.0));
            prop_assert!(obs[..4].iter().all(|v| (-1.0..=1.0).contains(v)));
            if done {
                break;
            }
        }
    }
}
