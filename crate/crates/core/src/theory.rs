//! Closed-form reward/advantage correlations and their Monte-Carlo checks.
//!
//! For a Gaussian reward model with per-objective means and a covariance
//! matrix, each estimator has a large-group limit for `Corr(R_i, A)`:
//!
//! * GRPO and Dr. GRPO: `(σ_i² + X) / (σ σ_i)` with `X = Σ_{j≠i} Cov(R_i, R_j)`
//!   and `σ²` the variance of the row sum.
//! * MO-GRPO: `(1 + Z) / √(K + Y)` with `Z = Σ_{j≠i} ρ_ij` and
//!   `Y = Σ_j Σ_{l≠j} ρ_lj`; this is exactly `1/√K` for uncorrelated objectives.
//!
//! [`empirical_corr`] samples many independent groups, applies an estimator to
//! each, and pools every `(R_i(o_g), A_g)` pair into one Pearson correlation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantage::{
    affine_transform, grpo_advantage, mogrpo_advantage, Estimator, RewardMatrix, TIE_TOL,
};
use crate::error::{Error, Result};
use crate::rng::SimRng;

const SYMMETRY_TOL: f64 = 1e-12;
/// `K + Y` at or below this is treated as fully anti-correlated.
pub const DEGENERATE_TOL: f64 = 1e-9;

/// Means and covariance of a multivariate Gaussian reward model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovSpec {
    pub means: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    #[serde(skip)]
    factor: Vec<Vec<f64>>,
}

impl CovSpec {
    pub fn new(means: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(Error::InvalidSpec("no objectives".into()));
        }
        if cov.len() != k || cov.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidSpec(format!("covariance must be {k}x{k}")));
        }
        if means
            .iter()
            .chain(cov.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidSpec("non-finite entry".into()));
        }
        for i in 0..k {
            if !(cov[i][i] > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "variance of objective {i} must be > 0"
                )));
            }
            for j in 0..i {
                if (cov[i][j] - cov[j][i]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidSpec(format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        let factor = cholesky_psd(&cov)?;
        Ok(Self { means, cov, factor })
    }

    /// Independent objectives with the given means and standard deviations.
    pub fn diagonal(means: Vec<f64>, stds: &[f64]) -> Result<Self> {
        let k = stds.len();
        let cov = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { stds[i] * stds[i] } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(means, cov)
    }

    /// Two objectives with standard deviations 1 and 5, uncorrelated.
    pub fn fig1() -> Self {
        Self::diagonal(vec![1.0, 1.0], &[1.0, 5.0]).expect("valid preset")
    }

    /// Noise covariance of one arm of the correlated bandit: variances
    /// (100, 2, 0.01) and `Cov(R1, R2) = -10`.
    pub fn bandit() -> Self {
        Self::new(
            vec![0.0, 0.0, 0.0],
            vec![
                vec![100.0, -10.0, 0.0],
                vec![-10.0, 2.0, 0.0],
                vec![0.0, 0.0, 0.01],
            ],
        )
        .expect("valid preset")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "fig1" => Ok(Self::fig1()),
            "bandit" => Ok(Self::bandit()),
            other => Err(Error::InvalidSpec(format!("unknown preset `{other}`"))),
        }
    }

    /// Reads a TOML file with `means = [..]` and `cov = [[..], ..]`.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let raw: CovSpec = toml::from_str(&text).map_err(|e| Error::file(path, e))?;
        Self::new(raw.means, raw.cov).map_err(|e| Error::file(path, e))
    }

    pub fn num_objectives(&self) -> usize {
        self.means.len()
    }

    pub fn std(&self, i: usize) -> f64 {
        self.cov[i][i].sqrt()
    }

    /// Lower-triangular `L` with `L Lᵀ = cov`.
    pub fn factor(&self) -> &[Vec<f64>] {
        &self.factor
    }

    fn check_index(&self, i: usize) -> Result<()> {
        let k = self.num_objectives();
        if i >= k {
            return Err(Error::ObjectiveIndex { index: i, k });
        }
        Ok(())
    }

    /// Variance of the row sum: `Σ_j σ_j² + Σ_{j≠l} Cov(R_j, R_l)`.
    pub fn total_variance(&self) -> f64 {
        self.cov.iter().flatten().sum()
    }

    fn correlation(&self, i: usize, j: usize) -> f64 {
        self.cov[i][j] / (self.std(i) * self.std(j))
    }
}

/// Cholesky factorization that tolerates semi-definite (zero) pivots and
/// rejects anything with a materially negative pivot.
fn cholesky_psd(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = (0..n).map(|i| a[i][i]).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(1.0);
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = a[j][j] - l[j][..j].iter().map(|x| x * x).sum::<f64>();
        if d < -tol {
            return Err(Error::NotPsd { pivot: j, value: d });
        }
        if d <= tol {
            // Semi-definite direction: the column must vanish below the pivot.
            for i in j + 1..n {
                let off = a[i][j] - (0..j).map(|p| l[i][p] * l[j][p]).sum::<f64>();
                if off.abs() > 1e-9 * scale.max(1.0) {
                    return Err(Error::NotPsd { pivot: j, value: d });
                }
            }
            continue;
        }
        let pivot = d.sqrt();
        l[j][j] = pivot;
        for i in j + 1..n {
            let off = a[i][j] - (0..j).map(|p| l[i][p] * l[j][p]).sum::<f64>();
            l[i][j] = off / pivot;
        }
    }
    Ok(l)
}

/// Large-group correlation between `R_i` and the GRPO advantage.
pub fn predicted_corr_grpo(spec: &CovSpec, i: usize) -> Result<f64> {
    spec.check_index(i)?;
    let total = spec.total_variance();
    if !(total > 0.0) {
        return Err(Error::Degenerate("row-sum variance is zero".into()));
    }
    let sigma = total.sqrt();
    let sigma_i = spec.std(i);
    let cross: f64 = (0..spec.num_objectives())
        .filter(|&j| j != i)
        .map(|j| spec.cov[i][j])
        .sum();
    Ok((sigma_i * sigma_i + cross) / (sigma * sigma_i))
}

/// Large-group correlation between `R_i` and the Dr. GRPO advantage.
pub fn predicted_corr_drgrpo(spec: &CovSpec, i: usize) -> Result<f64> {
    spec.check_index(i)?;
    let k = spec.num_objectives();
    let var_i = spec.cov[i][i];
    let mut cross_all = 0.0;
    for j in 0..k {
        for l in 0..k {
            if l != j {
                cross_all += spec.cov[j][l];
            }
        }
    }
    let diag: f64 = (0..k).map(|j| spec.cov[j][j]).sum();
    let var_adv = diag + cross_all;
    if !(var_adv > 0.0) {
        return Err(Error::Degenerate("row-sum variance is zero".into()));
    }
    let x: f64 = (0..k).filter(|&j| j != i).map(|j| spec.cov[i][j]).sum();
    Ok((var_i + x) / (var_i * var_adv).sqrt())
}

/// Large-group correlation between `R_i` and the MO-GRPO advantage.
pub fn predicted_corr_mogrpo(spec: &CovSpec, i: usize) -> Result<f64> {
    spec.check_index(i)?;
    let k = spec.num_objectives();
    let z: f64 = (0..k)
        .filter(|&j| j != i)
        .map(|j| spec.correlation(i, j))
        .sum();
    let y: f64 = (0..k)
        .flat_map(|j| (0..k).filter(move |&l| l != j).map(move |l| (l, j)))
        .map(|(l, j)| spec.correlation(l, j))
        .sum();
    let denom = k as f64 + y;
    if denom <= DEGENERATE_TOL {
        return Err(Error::Degenerate(format!(
            "K + Y = {denom:e} (objectives cancel out)"
        )));
    }
    Ok((1.0 + z) / denom.sqrt())
}

pub fn predicted_corr(spec: &CovSpec, estimator: Estimator, i: usize) -> Result<f64> {
    match estimator {
        Estimator::Grpo => predicted_corr_grpo(spec, i),
        Estimator::DrGrpo => predicted_corr_drgrpo(spec, i),
        Estimator::MoGrpo => predicted_corr_mogrpo(spec, i),
    }
}

/// Draws `n` rows from the spec's multivariate normal using `rng`.
pub fn sample_rewards_with(spec: &CovSpec, n: usize, rng: &mut SimRng) -> Result<RewardMatrix> {
    let k = spec.num_objectives();
    let mut values = Vec::with_capacity(n * k);
    let mut z = vec![0.0; k];
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = rng.normal());
        for (i, row) in spec.factor.iter().enumerate() {
            let dot: f64 = row[..=i].iter().zip(&z).map(|(l, x)| l * x).sum();
            values.push(spec.means[i] + dot);
        }
    }
    RewardMatrix::new(n, k, values)
}

/// Draws `n` i.i.d. reward rows; bit-reproducible for a fixed `(spec, seed)`.
pub fn sample_rewards(spec: &CovSpec, n: usize, seed: u64) -> Result<RewardMatrix> {
    sample_rewards_with(spec, n, &mut SimRng::new(seed))
}

/// Two-pass Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Predicted vs pooled empirical correlations for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrReport {
    pub estimator: Estimator,
    pub predicted: Vec<f64>,
    pub empirical: Vec<f64>,
    pub samples: usize,
}

impl CorrReport {
    pub fn abs_gaps(&self) -> Vec<f64> {
        self.predicted
            .iter()
            .zip(&self.empirical)
            .map(|(p, e)| (p - e).abs())
            .collect()
    }

    pub fn max_gap(&self) -> f64 {
        self.abs_gaps().into_iter().fold(0.0, f64::max)
    }
}

/// Samples `n_groups` groups of size `group_size`, applies `estimator` to each
/// and pools the `(R_i, A)` pairs. Group `n` draws from sub-stream `n` of
/// `seed`, so the result does not depend on the worker count.
///
/// The closed forms are large-group limits. Within-group standardization
/// scales the pooled correlation by `E[ŝ]/σ` (about 0.90 at G = 8), so large
/// groups are needed for the two to agree.
pub fn empirical_corr(
    spec: &CovSpec,
    estimator: Estimator,
    group_size: usize,
    n_groups: usize,
    seed: u64,
) -> Result<CorrReport> {
    if group_size < 2 {
        return Err(Error::GroupTooSmall(group_size));
    }
    if n_groups == 0 {
        return Err(Error::Config("n_groups must be at least 1".into()));
    }
    let k = spec.num_objectives();
    let predicted = (0..k)
        .map(|i| predicted_corr(spec, estimator, i))
        .collect::<Result<Vec<_>>>()?;

    let groups = (0..n_groups)
        .into_par_iter()
        .map(|n| {
            let mut rng = SimRng::substream(seed, n as u64);
            let rewards = sample_rewards_with(spec, group_size, &mut rng)?;
            let adv = estimator.advantages(&rewards, false);
            Ok((rewards, adv.values))
        })
        .collect::<Result<Vec<_>>>()?;

    let samples = group_size * n_groups;
    let mut adv = Vec::with_capacity(samples);
    let mut cols = vec![Vec::with_capacity(samples); k];
    for (rewards, a) in &groups {
        adv.extend_from_slice(a);
        for (i, col) in cols.iter_mut().enumerate() {
            col.extend(rewards.column(i));
        }
    }
    let empirical = cols.iter().map(|c| pearson(c, &adv)).collect();
    Ok(CorrReport {
        estimator,
        predicted,
        empirical,
        samples,
    })
}

pub const CORR_CSV_HEADER: [&str; 6] = [
    "estimator",
    "objective_index",
    "predicted",
    "empirical",
    "abs_gap",
    "samples",
];

/// Writes reports as CSV with columns
/// `estimator,objective_index,predicted,empirical,abs_gap,samples`.
pub fn write_corr_csv<W: Write>(reports: &[CorrReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CORR_CSV_HEADER)?;
    for r in reports {
        for (i, gap) in r.abs_gaps().into_iter().enumerate() {
            w.write_record([
                r.estimator.id().to_string(),
                i.to_string(),
                format!("{:.6}", r.predicted[i]),
                format!("{:.6}", r.empirical[i]),
                format!("{gap:.6}"),
                r.samples.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Two-output, two-objective trade-off where scaling one objective flips
/// GRPO's preferred output but not MO-GRPO's.
///
/// With two outputs every non-constant column standardizes to ±1, so the
/// MO-GRPO advantages are an exact tie before and after scaling; only the
/// ε-guard separates them, hence the tie-tolerant argmax.
#[derive(Debug, Clone)]
pub struct ReversalExample {
    pub rewards: RewardMatrix,
    pub scale: Vec<f64>,
    /// `(R1(o_a) - R1(o_b)) / (R2(o_b) - R2(o_a))`; reversal needs `a2/a1` above it.
    pub threshold: f64,
    pub grpo_before: usize,
    pub grpo_after: usize,
    pub mogrpo_before: usize,
    pub mogrpo_after: usize,
}

impl ReversalExample {
    pub fn grpo_flipped(&self) -> bool {
        self.grpo_before != self.grpo_after
    }

    pub fn mogrpo_stable(&self) -> bool {
        self.mogrpo_before == self.mogrpo_after
    }
}

pub fn reversal_example() -> ReversalExample {
    let rewards = RewardMatrix::from_columns(&[vec![1.0, 0.0], vec![0.0, 0.9]]).expect("valid");
    let scale = vec![1.0, 2.0];
    let shifted = affine_transform(&rewards, &scale, &[0.0, 0.0]).expect("positive scale");
    let threshold =
        (rewards.get(0, 0) - rewards.get(1, 0)) / (rewards.get(1, 1) - rewards.get(0, 1));
    ReversalExample {
        grpo_before: grpo_advantage(&rewards).argmax(),
        grpo_after: grpo_advantage(&shifted).argmax(),
        mogrpo_before: mogrpo_advantage(&rewards, false).argmax_within(TIE_TOL),
        mogrpo_after: mogrpo_advantage(&shifted, false).argmax_within(TIE_TOL),
        rewards,
        scale,
        threshold,
    }
}

/// Outcome of random positive affine transforms applied to random groups.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFuzzReport {
    pub trials: usize,
    /// Largest entrywise MO-GRPO difference, guarded form.
    pub max_abs_diff: f64,
    /// Largest entrywise difference with no ε-guard (exact standardization).
    pub max_abs_diff_unguarded: f64,
    pub argmax_matches: usize,
}

/// Rewards are uniform on [-10, 10]; scales are log-uniform on [0.5, 4] and
/// shifts uniform on [-10, 10]. The guarded advantages differ from the exact
/// ones by about `ε·|a-1| / (a σ)` per column, so the scale of the rewards
/// sets how close the guarded form can get to exact invariance.
pub fn affine_invariance_fuzz(
    trials: usize,
    group_size: usize,
    objectives: usize,
    seed: u64,
) -> Result<AffineFuzzReport> {
    let mut report = AffineFuzzReport {
        trials,
        max_abs_diff: 0.0,
        max_abs_diff_unguarded: 0.0,
        argmax_matches: 0,
    };
    for t in 0..trials {
        let mut rng = SimRng::substream(seed, t as u64);
        let values = (0..group_size * objectives)
            .map(|_| rng.uniform_range(-10.0, 10.0))
            .collect();
        let rewards = RewardMatrix::new(group_size, objectives, values)?;
        let scale: Vec<f64> = (0..objectives)
            .map(|_| rng.uniform_range(0.5f64.ln(), 4f64.ln()).exp())
            .collect();
        let shift: Vec<f64> = (0..objectives)
            .map(|_| rng.uniform_range(-10.0, 10.0))
            .collect();
        let moved = affine_transform(&rewards, &scale, &shift)?;

        let before = mogrpo_advantage(&rewards, false);
        let after = mogrpo_advantage(&moved, false);
        for (a, b) in before.values.iter().zip(&after.values) {
            report.max_abs_diff = report.max_abs_diff.max((a - b).abs());
        }
        if before.argmax_within(TIE_TOL) == after.argmax_within(TIE_TOL) {
            report.argmax_matches += 1;
        }
        let exact_before = unguarded_mogrpo(&rewards);
        let exact_after = unguarded_mogrpo(&moved);
        for (a, b) in exact_before.iter().zip(&exact_after) {
            report.max_abs_diff_unguarded = report.max_abs_diff_unguarded.max((a - b).abs());
        }
    }
    Ok(report)
}

fn unguarded_mogrpo(rewards: &RewardMatrix) -> Vec<f64> {
    let g = rewards.group_size() as f64;
    let mut out = vec![0.0; rewards.group_size()];
    for col in 0..rewards.num_objectives() {
        let mean = rewards.column(col).sum::<f64>() / g;
        let std = (rewards.column(col).map(|r| (r - mean).powi(2)).sum::<f64>() / g).sqrt();
        for (o, r) in out.iter_mut().zip(rewards.column(col)) {
            *o += (r - mean) / std;
        }
    }
    out
}
