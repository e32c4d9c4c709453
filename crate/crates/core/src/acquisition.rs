//! Acquisition strategies for the unlabeled pool.
//!
//! Localized entropy averages voxel-wise Bernoulli entropy over a region of
//! interest, the dilated predicted segmentation, so that the score is a
//! per-voxel quantity rather than growing with structure size. The weighted
//! variant multiplies it by a per-group weight: a softmax over standardized
//! dice deficits measured on the labeled set, so that groups the current
//! model segments worse are sampled more.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{group_means, CaseId, CaseScore, GroupId};
use crate::real::Real;
use crate::seed::derive_seed;
use crate::volume::{self, bernoulli_entropy_map, dilate, masked_mean, ProbabilityVolume};

/// Below this pooled standard deviation all groups get equal weight.
pub const SIGMA_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    MeanEntropy,
    LocalizedEntropy,
    WeightedLocalizedEntropy,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Random,
        StrategyKind::MeanEntropy,
        StrategyKind::LocalizedEntropy,
        StrategyKind::WeightedLocalizedEntropy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::MeanEntropy => "mean_entropy",
            StrategyKind::LocalizedEntropy => "localized_entropy",
            StrategyKind::WeightedLocalizedEntropy => "weighted_localized_entropy",
        }
    }

    pub fn uses_weights(&self) -> bool {
        matches!(self, StrategyKind::WeightedLocalizedEntropy)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupWeight<T> {
    pub group: GroupId,
    /// Standardized dice deficit; positive for groups below the pooled mean.
    pub z: T,
    pub weight: T,
}

/// Per-group weights, frozen for one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeightTable<T> {
    entries: Vec<GroupWeight<T>>,
}

impl<T: Real> GroupWeightTable<T> {
    /// Softmax over `z`, one entry per group.
    pub fn from_z(groups: &[GroupId], z: &[T]) -> Result<Self> {
        if groups.is_empty() || groups.len() != z.len() {
            return Err(Error::InvalidConfig("weight table needs one z value per group".into()));
        }
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        let mut entries: Vec<_> = groups
            .iter()
            .zip(z)
            .zip(exps)
            .map(|((&group, &z), e)| GroupWeight {
                group,
                z,
                weight: e / total,
            })
            .collect();
        entries.sort_by_key(|e| e.group);
        Ok(Self { entries })
    }

    pub fn uniform(groups: &[GroupId]) -> Result<Self> {
        Self::from_z(groups, &vec![T::zero(); groups.len()])
    }

    pub fn entries(&self) -> &[GroupWeight<T>] {
        &self.entries
    }

    pub fn weight(&self, group: GroupId) -> Option<T> {
        self.entries.iter().find(|e| e.group == group).map(|e| e.weight)
    }

    pub fn z(&self, group: GroupId) -> Option<T> {
        self.entries.iter().find(|e| e.group == group).map(|e| e.z)
    }
}

/// Group weights from labeled-set dice scores.
///
/// `z_g = (mean_all - mean_g) / sigma_all` with the pooled mean and the
/// population standard deviation over all labeled cases, then a plain softmax.
pub fn compute_group_weights<T: Real>(
    labeled_scores: &[CaseScore<T>],
    groups: &[GroupId],
) -> Result<GroupWeightTable<T>> {
    if labeled_scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let per_group = group_means(labeled_scores, groups)?;
    let n = T::from_usize_lossy(labeled_scores.len());
    let mean_all = labeled_scores.iter().map(|s| s.dice).sum::<T>() / n;
    let var = labeled_scores.iter().map(|s| (s.dice - mean_all).powi(2)).sum::<T>() / n;
    let sigma = var.sqrt();
    let z: Vec<T> = per_group
        .iter()
        .map(|g| {
            if sigma < T::lit(SIGMA_FLOOR) {
                T::zero()
            } else {
                (mean_all - g.mean_dice) / sigma
            }
        })
        .collect();
    let ids: Vec<GroupId> = per_group.iter().map(|g| g.group).collect();
    GroupWeightTable::from_z(&ids, &z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizedEntropy<T> {
    pub value: T,
    pub region_size: usize,
    /// The predicted mask was empty and the whole volume was averaged instead.
    pub fallback_used: bool,
}

/// Mean voxel entropy over the thresholded prediction dilated by `dilation_radius`.
pub fn compute_localized_entropy<T: Real>(
    probs: &ProbabilityVolume<T>,
    dilation_radius: usize,
    threshold: f64,
) -> Result<LocalizedEntropy<T>> {
    let predicted = volume::threshold(probs, threshold)?;
    let region = dilate(&predicted, dilation_radius);
    let entropy = bernoulli_entropy_map(probs);
    match masked_mean(&entropy, &region) {
        Ok(value) => Ok(LocalizedEntropy {
            value,
            region_size: region.count(),
            fallback_used: false,
        }),
        Err(Error::EmptyRegion) => Ok(LocalizedEntropy {
            value: entropy.mean(),
            region_size: probs.shape().len(),
            fallback_used: true,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringParams {
    pub dilation_radius: usize,
    pub threshold: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            dilation_radius: volume::DEFAULT_DILATION_RADIUS,
            threshold: volume::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a, T> {
    pub case_id: CaseId,
    pub group: GroupId,
    pub probs: &'a ProbabilityVolume<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionScore<T> {
    pub case_id: CaseId,
    pub group: GroupId,
    pub strategy: StrategyKind,
    /// Localized or whole-volume mean entropy. For `Random` this holds the uniform draw.
    pub raw_entropy: T,
    pub region_size: usize,
    pub weight_applied: T,
    pub score: T,
    pub fallback_used: bool,
}

/// Uniform draw in `[0, 1)` for one candidate, independent of pool order.
fn random_score<T: Real>(rng_seed: u64, case: CaseId) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, u64::from(case.0)));
    T::lit(rng.gen::<f64>())
}

pub fn score_candidates<T: Real>(
    strategy: StrategyKind,
    pool: &[Candidate<'_, T>],
    weights: Option<&GroupWeightTable<T>>,
    params: ScoringParams,
    rng_seed: u64,
) -> Result<Vec<AcquisitionScore<T>>> {
    match (strategy.uses_weights(), weights.is_some()) {
        (true, false) => {
            return Err(Error::WeightsMismatch {
                strategy,
                problem: "requires group weights",
            })
        }
        (false, true) => {
            return Err(Error::WeightsMismatch {
                strategy,
                problem: "does not accept group weights",
            })
        }
        _ => {}
    }
    pool.par_iter()
        .map(|c| {
            let total = c.probs.shape().len();
            let (raw, region_size, weight, fallback_used) = match strategy {
                StrategyKind::Random => (random_score(rng_seed, c.case_id), 0, T::one(), false),
                StrategyKind::MeanEntropy => (bernoulli_entropy_map(c.probs).mean(), total, T::one(), false),
                StrategyKind::LocalizedEntropy | StrategyKind::WeightedLocalizedEntropy => {
                    let h = compute_localized_entropy(c.probs, params.dilation_radius, params.threshold)?;
                    let w = match weights {
                        Some(table) => table.weight(c.group).ok_or(Error::MissingGroup(c.group))?,
                        None => T::one(),
                    };
                    (h.value, h.region_size, w, h.fallback_used)
                }
            };
            Ok(AcquisitionScore {
                case_id: c.case_id,
                group: c.group,
                strategy,
                raw_entropy: raw,
                region_size,
                weight_applied: weight,
                score: weight * raw,
                fallback_used,
            })
        })
        .collect()
}

/// Highest-scoring `b` candidates; equal scores go to the smaller case id.
pub fn select_batch<T: Real>(scores: &[AcquisitionScore<T>], b: usize) -> Result<Vec<CaseId>> {
    if b == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    if b > scores.len() {
        return Err(Error::BudgetExceedsPool {
            batch: b,
            pool: scores.len(),
        });
    }
    let mut ranked: Vec<&AcquisitionScore<T>> = scores.iter().collect();
    ranked.sort_by(|a, c| {
        c.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.case_id.cmp(&c.case_id))
    });
    Ok(ranked.into_iter().take(b).map(|s| s.case_id).collect())
}
