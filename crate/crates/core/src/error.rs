use thiserror::Error;

use crate::metrics::GroupId;
use crate::volume::VolumeShape;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volume shape {nx}x{ny}x{nz}: {reason}")]
    InvalidShape {
        nx: usize,
        ny: usize,
        nz: usize,
        reason: &'static str,
    },
    #[error("data length {actual} does not match shape ({expected} voxels)")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: VolumeShape, right: VolumeShape },
    #[error("non-finite value at voxel {index}")]
    NonFinite { index: usize },
    #[error("probability {value} at voxel {index} outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("threshold {0} outside the open interval (0, 1)")]
    InvalidThreshold(f64),
    #[error("mask selects no voxels")]
    EmptyRegion,
    #[error("no scores for group {0}")]
    MissingGroup(GroupId),
    #[error("no scores supplied")]
    EmptyScores,
    #[error("dice {0} outside [0, 1]")]
    InvalidDice(f64),
    #[error("strategy {strategy} {problem}")]
    WeightsMismatch {
        strategy: crate::acquisition::StrategyKind,
        problem: &'static str,
    },
    #[error("batch of {batch} exceeds pool of {pool}")]
    BudgetExceedsPool { batch: usize, pool: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("unknown case {0}")]
    UnknownCase(crate::metrics::CaseId),
    #[error("unlabeled pool exhausted: {available} left, batch needs {needed}")]
    PoolExhausted { available: usize, needed: usize },
    #[error("malformed volume file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
