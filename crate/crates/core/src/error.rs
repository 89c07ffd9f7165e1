use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("group has {0} outputs; at least 2 are required")]
    GroupTooSmall(usize),
    #[error("reward matrix needs at least one objective")]
    NoObjectives,
    #[error("reward table is ragged: row {row} has {found} entries, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("affine scale a[{index}] = {value} must be strictly positive")]
    NonPositiveScale { index: usize, value: f64 },
    #[error("invalid covariance spec: {0}")]
    InvalidSpec(String),
    #[error("covariance matrix is not positive semi-definite (pivot {pivot} = {value:e})")]
    NotPsd { pivot: usize, value: f64 },
    #[error("degenerate correlation: {0}")]
    Degenerate(String),
    #[error("objective index {index} out of range for K = {k}")]
    ObjectiveIndex { index: usize, k: usize },
    #[error("arm {arm} out of range for a {arms}-armed bandit")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("action {action} out of range ({actions} actions)")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("episode exhausted after {0} steps")]
    EpisodeExhausted(usize),
    #[error("invalid policy architecture: {0}")]
    Architecture(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("policy diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },
    #[error("{path}: {detail}")]
    File { path: PathBuf, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        Error::File {
            path: path.into(),
            detail: detail.to_string(),
        }
    }
}
