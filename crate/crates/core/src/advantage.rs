//! Group statistics and the three group-relative advantage estimators.
//!
//! A group is a G×K [`RewardMatrix`]: one row per sampled output, one column
//! per reward function. All spreads are population standard deviations
//! (divide by G), and every division adds [`STD_EPS`] to the spread so a
//! zero-variance group yields finite (zero) advantages.
//!
//! * GRPO sums each row, then standardizes the row sums.
//! * Dr. GRPO sums each row and only centers the sums.
//! * MO-GRPO standardizes each column separately and sums the standardized
//!   columns, optionally dividing by √K.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Added to every standard deviation before dividing.
pub const STD_EPS: f64 = 1e-6;

/// Dense row-major G×K table of rewards for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl RewardMatrix {
    /// Builds a matrix from a flat row-major buffer.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows < 2 {
            return Err(Error::GroupTooSmall(rows));
        }
        if cols == 0 {
            return Err(Error::NoObjectives);
        }
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "reward cell ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { values, rows, cols })
    }

    /// Builds a matrix from per-output rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::RaggedRows {
                    row,
                    expected: cols,
                    found: r.len(),
                });
            }
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix from per-objective columns (`columns[i][g]` is `R_i(o_g)`).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        for (i, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::RaggedRows {
                    row: i,
                    expected: rows,
                    found: c.len(),
                });
            }
        }
        let cols = columns.len();
        let mut values = Vec::with_capacity(rows * cols);
        for g in 0..rows {
            values.extend(columns.iter().map(|c| c[g]));
        }
        Self::new(rows, cols, values)
    }

    /// Group size G.
    pub fn group_size(&self) -> usize {
        self.rows
    }

    /// Number of objectives K.
    pub fn num_objectives(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.values.iter().skip(col).step_by(self.cols).copied()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

fn mean_and_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-objective and row-sum group statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub total_mean: f64,
    pub total_std: f64,
}

pub fn group_stats(rewards: &RewardMatrix) -> GroupStats {
    let (means, stds) = (0..rewards.num_objectives())
        .map(|i| mean_and_std(rewards.column(i)))
        .unzip();
    let sums = rewards.row_sums();
    let (total_mean, total_std) = mean_and_std(sums.iter().copied());
    GroupStats {
        means,
        stds,
        total_mean,
        total_std,
    }
}

/// Which advantage estimator produced (or should produce) a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Grpo,
    DrGrpo,
    MoGrpo,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Grpo, Estimator::DrGrpo, Estimator::MoGrpo];

    /// Lowercase identifier used on the command line and in CSV files.
    pub fn id(self) -> &'static str {
        match self {
            Estimator::Grpo => "grpo",
            Estimator::DrGrpo => "drgrpo",
            Estimator::MoGrpo => "mogrpo",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Estimator::Grpo => "GRPO",
            Estimator::DrGrpo => "Dr. GRPO",
            Estimator::MoGrpo => "MO-GRPO",
        }
    }

    /// Applies this estimator to a group.
    pub fn advantages(self, rewards: &RewardMatrix, scale_by_sqrt_k: bool) -> AdvantageVector {
        match self {
            Estimator::Grpo => grpo_advantage(rewards),
            Estimator::DrGrpo => drgrpo_advantage(rewards),
            Estimator::MoGrpo => mogrpo_advantage(rewards, scale_by_sqrt_k),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .to_ascii_lowercase()
            .replace(['-', '.', '_', ' '], "")
            .as_str()
        {
            "grpo" => Ok(Estimator::Grpo),
            "drgrpo" => Ok(Estimator::DrGrpo),
            "mogrpo" => Ok(Estimator::MoGrpo),
            _ => Err(Error::Config(format!("unknown estimator `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub estimator: Estimator,
    pub scaled_by_sqrt_k: bool,
}

impl AdvantageVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest advantage (first one on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    /// First index whose advantage is within `tol` of the maximum, so that
    /// near-ties left by the ε-guard do not decide the ordering.
    pub fn argmax_within(&self, tol: f64) -> usize {
        let max = self
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        self.values
            .iter()
            .position(|&v| v >= max - tol)
            .unwrap_or(0)
    }
}

/// Three outputs scored by two objectives: `R1 = [0.1, 0.5, 0.9]`,
/// `R2 = [0.15, 0.13, 0.05]`.
pub fn worked_example() -> RewardMatrix {
    RewardMatrix::from_columns(&[vec![0.1, 0.5, 0.9], vec![0.15, 0.13, 0.05]])
        .expect("valid example")
}

/// Advantages closer than this are treated as tied when comparing orderings.
pub const TIE_TOL: f64 = 1e-5;

pub(crate) fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// Row sums standardized by the group's row-sum mean and spread.
pub fn grpo_advantage(rewards: &RewardMatrix) -> AdvantageVector {
    let stats = group_stats(rewards);
    let denom = stats.total_std + STD_EPS;
    let values = rewards
        .row_sums()
        .iter()
        .map(|s| (s - stats.total_mean) / denom)
        .collect();
    AdvantageVector {
        values,
        estimator: Estimator::Grpo,
        scaled_by_sqrt_k: false,
    }
}

/// Row sums centered by their group mean; no rescaling.
pub fn drgrpo_advantage(rewards: &RewardMatrix) -> AdvantageVector {
    let stats = group_stats(rewards);
    let values = rewards
        .row_sums()
        .iter()
        .map(|s| s - stats.total_mean)
        .collect();
    AdvantageVector {
        values,
        estimator: Estimator::DrGrpo,
        scaled_by_sqrt_k: false,
    }
}

/// Column `i` centered and divided by its own spread (plus [`STD_EPS`]).
pub fn standardized_column(rewards: &RewardMatrix, col: usize) -> Vec<f64> {
    let (mean, std) = mean_and_std(rewards.column(col));
    rewards
        .column(col)
        .map(|r| (r - mean) / (std + STD_EPS))
        .collect()
}

/// Sum of individually standardized columns, optionally divided by √K.
pub fn mogrpo_advantage(rewards: &RewardMatrix, scale_by_sqrt_k: bool) -> AdvantageVector {
    let mut values = vec![0.0; rewards.group_size()];
    for col in 0..rewards.num_objectives() {
        for (acc, z) in values.iter_mut().zip(standardized_column(rewards, col)) {
            *acc += z;
        }
    }
    if scale_by_sqrt_k {
        let s = (rewards.num_objectives() as f64).sqrt();
        values.iter_mut().for_each(|v| *v /= s);
    }
    AdvantageVector {
        values,
        estimator: Estimator::MoGrpo,
        scaled_by_sqrt_k: scale_by_sqrt_k,
    }
}

/// Column-wise positive affine map `R_i -> a_i R_i + b_i`.
pub fn affine_transform(
    rewards: &RewardMatrix,
    scale: &[f64],
    shift: &[f64],
) -> Result<RewardMatrix> {
    let k = rewards.num_objectives();
    for v in [scale.len(), shift.len()] {
        if v != k {
            return Err(Error::Dimension {
                expected: k,
                found: v,
            });
        }
    }
    if let Some((index, &value)) = scale.iter().enumerate().find(|(_, a)| !(**a > 0.0)) {
        return Err(Error::NonPositiveScale { index, value });
    }
    let values = rewards
        .as_slice()
        .iter()
        .enumerate()
        .map(|(idx, r)| scale[idx % k] * r + shift[idx % k])
        .collect();
    RewardMatrix::new(rewards.group_size(), k, values)
}
