//! Desk-scale stand-ins for the imaging data and the segmentation network:
//! a synthetic two-group cohort with a controllable localized deformation,
//! and a per-voxel logistic segmenter trained with binary cross-entropy.

mod cohort;
mod features;
mod segmenter;
pub mod store;

pub use cohort::{generate_cohort, BiasPreset, Case, CohortConfig};
pub use features::{extract_features, FeatureVolume, FEATURE_COUNT};
pub use segmenter::{predict, predict_features, train, SegmenterParams, TrainingHyper, TrainingSet};
