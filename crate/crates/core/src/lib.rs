//! Fairness-aware active learning for voxel segmentation.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases at the crate root fix it to `f64`, which
//! is what the command-line tool uses.

pub mod acquisition;
pub mod active;
pub mod error;
pub mod metrics;
pub mod real;
pub mod seed;
pub mod surrogate;
pub mod volume;

pub use acquisition::StrategyKind;
pub use error::{Error, Result};
pub use metrics::{CaseId, GroupId};
pub use real::Real;
pub use volume::{BinaryMask, VolumeShape};

pub type ScalarVolume = volume::ScalarVolume<f64>;
pub type ProbabilityVolume = volume::ProbabilityVolume<f64>;
pub type CaseScore = metrics::CaseScore<f64>;
pub type GroupPerformance = metrics::GroupPerformance<f64>;
pub type FairnessReport = metrics::FairnessReport<f64>;
pub type GroupWeightTable = acquisition::GroupWeightTable<f64>;
pub type AcquisitionScore = acquisition::AcquisitionScore<f64>;
pub type Case = surrogate::Case<f64>;
pub type SegmenterParams = surrogate::SegmenterParams<f64>;
pub type CycleRecord = active::CycleRecord<f64>;

pub type ScalarVolumeF32 = volume::ScalarVolume<f32>;
pub type ProbabilityVolumeF32 = volume::ProbabilityVolume<f32>;
pub type CaseF32 = surrogate::Case<f32>;
