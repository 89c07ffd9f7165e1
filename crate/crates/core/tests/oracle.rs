//! Estimators and closed-form correlations against independent recomputations.

// Four-digit reference values, not approximations of named constants.
#![allow(clippy::approx_constant)]

mod common;

use common::{oracle_grpo, oracle_mogrpo};
use mogrpo_core::advantage::{
    drgrpo_advantage, grpo_advantage, mogrpo_advantage, worked_example, RewardMatrix,
};
use mogrpo_core::theory::{predicted_corr, CovSpec};
use mogrpo_core::Estimator;
use proptest::prelude::*;

fn matrix(max_g: usize, max_k: usize) -> impl Strategy<Value = RewardMatrix> {
    (2..=max_g, 1..=max_k).prop_flat_map(|(g, k)| {
        prop::collection::vec(-50.0f64..50.0, g * k)
            .prop_map(move |v| RewardMatrix::new(g, k, v).unwrap())
    })
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn worked_example_against_scalar_loops() {
    let r = worked_example();
    assert_close(&grpo_advantage(&r).values, &oracle_grpo(&r), 1e-12);
    assert_close(
        &mogrpo_advantage(&r, false).values,
        &oracle_mogrpo(&r),
        1e-12,
    );
}

proptest! {
    #[test]
    fn grpo_matches_oracle(r in matrix(3, 2)) {
        assert_close(&grpo_advantage(&r).values, &oracle_grpo(&r), 1e-12);
    }

    #[test]
    fn mogrpo_matches_oracle(r in matrix(3, 2)) {
        assert_close(&mogrpo_advantage(&r, false).values, &oracle_mogrpo(&r), 1e-12);
    }

    #[test]
    fn estimators_match_oracle_on_larger_groups(r in matrix(16, 5)) {
        assert_close(&grpo_advantage(&r).values, &oracle_grpo(&r), 1e-10);
        assert_close(&mogrpo_advantage(&r, false).values, &oracle_mogrpo(&r), 1e-10);
        let sums: Vec<f64> = (0..r.group_size()).map(|i| r.row(i).iter().sum()).collect();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        let centered: Vec<f64> = sums.iter().map(|s| s - mean).collect();
        assert_close(&drgrpo_advantage(&r).values, &centered, 1e-10);
    }

    #[test]
    fn sqrt_k_scaling_is_a_positive_rescale(r in matrix(8, 4)) {
        let plain = mogrpo_advantage(&r, false);
        let scaled = mogrpo_advantage(&r, true);
        let k = (r.num_objectives() as f64).sqrt();
        let expect: Vec<f64> = plain.values.iter().map(|v| v / k).collect();
        assert_close(&scaled.values, &expect, 1e-12);
        prop_assert_eq!(plain.argmax(), scaled.argmax());
    }
}

/// Correlation of R_i with the row sum, and with the sum of standardized
/// objectives, straight from covariance bilinearity.
fn oracle_corr(spec: &CovSpec, estimator: Estimator, i: usize) -> f64 {
    let c = &spec.cov;
    let k = c.len();
    let sd = |j: usize| c[j][j].sqrt();
    match estimator {
        Estimator::Grpo | Estimator::DrGrpo => {
            let cov_is: f64 = (0..k).map(|j| c[i][j]).sum();
            let var_s: f64 = c.iter().flatten().sum();
            cov_is / (sd(i) * var_s.sqrt())
        }
        Estimator::MoGrpo => {
            let cov_iz: f64 = (0..k).map(|j| c[i][j] / sd(j)).sum();
            let var_z: f64 = (0..k)
                .flat_map(|j| (0..k).map(move |l| (j, l)))
                .map(|(j, l)| c[j][l] / (sd(j) * sd(l)))
                .sum();
            cov_iz / (sd(i) * var_z.sqrt())
        }
    }
}

#[test]
fn reference_correlation_values() {
    let fig1 = CovSpec::fig1();
    let bandit = CovSpec::bandit();
    let cases: [(&CovSpec, Estimator, &[f64]); 4] = [
        (&fig1, Estimator::Grpo, &[0.1961, 0.9806]),
        (&fig1, Estimator::MoGrpo, &[0.7071, 0.7071]),
        (&bandit, Estimator::Grpo, &[0.9938, -0.6247, 0.0110]),
        (&bandit, Estimator::MoGrpo, &[0.2326, 0.2326, 0.7941]),
    ];
    for (spec, est, expect) in cases {
        for (i, e) in expect.iter().enumerate() {
            let p = predicted_corr(spec, est, i).unwrap();
            assert!((p - e).abs() < 1e-4, "{est} R{i}: {p} vs {e}");
            assert!((p - oracle_corr(spec, est, i)).abs() < 1e-12);
        }
    }
    let three = CovSpec::diagonal(vec![0.0; 3], &[1.0, 4.0, 0.3]).unwrap();
    for i in 0..3 {
        assert!(
            (predicted_corr(&three, Estimator::MoGrpo, i).unwrap() - 1.0 / 3f64.sqrt()).abs()
                < 1e-12
        );
    }
}

fn cov_spec() -> impl Strategy<Value = CovSpec> {
    (2usize..=4).prop_flat_map(|k| {
        (
            prop::collection::vec(-1.0f64..1.0, k * k),
            prop::collection::vec(0.1f64..3.0, k),
        )
            .prop_filter_map("needs a well-conditioned covariance", move |(a, d)| {
                // cov = A Aᵀ + diag(d) is symmetric positive definite.
                let cov: Vec<Vec<f64>> = (0..k)
                    .map(|i| {
                        (0..k)
                            .map(|j| {
                                (0..k).map(|l| a[i * k + l] * a[j * k + l]).sum::<f64>()
                                    + if i == j { d[i] } else { 0.0 }
                            })
                            .collect()
                    })
                    .collect();
                CovSpec::new(vec![0.0; k], cov).ok()
            })
    })
}

proptest! {
    #[test]
    fn predictions_match_bilinear_oracle(spec in cov_spec()) {
        for est in Estimator::ALL {
            for i in 0..spec.num_objectives() {
                let p = predicted_corr(&spec, est, i).unwrap();
                prop_assert!((p - oracle_corr(&spec, est, i)).abs() < 1e-9);
                prop_assert!(p.abs() <= 1.0 + 1e-12);
            }
        }
    }
}
