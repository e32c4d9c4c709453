//! Dice overlap and group-stratified fairness statistics: disparity (sum of
//! absolute deviations of group means from the pooled mean) and
//! equity-scaled segmentation performance (pooled mean over `1 + disparity`).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::volume::BinaryMask;

/// Small integer group label. `G1` carries the localized deformation in the
/// synthetic cohorts, `G2` only the shared global variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u16);

impl GroupId {
    pub const G1: GroupId = GroupId(1);
    pub const G2: GroupId = GroupId(2);

    pub fn name(&self) -> String {
        format!("G{}", self.0)
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseId(pub u32);

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case_{:04}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseScore<T> {
    pub case_id: CaseId,
    pub group: GroupId,
    pub dice: T,
}

impl<T: Real> CaseScore<T> {
    pub fn new(case_id: CaseId, group: GroupId, dice: T) -> Result<Self> {
        if !(dice >= T::zero() && dice <= T::one()) {
            return Err(Error::InvalidDice(dice.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { case_id, group, dice })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupPerformance<T> {
    pub group: GroupId,
    pub mean_dice: T,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport<T> {
    /// Mean over all cases, not the mean of the group means.
    pub overall_dice: T,
    pub per_group: Vec<GroupPerformance<T>>,
    pub delta: T,
    pub essp: T,
}

impl<T: Real> FairnessReport<T> {
    pub fn group_dice(&self, group: GroupId) -> Option<T> {
        self.per_group.iter().find(|g| g.group == group).map(|g| g.mean_dice)
    }
}

/// `2|A∩B| / (|A|+|B|)`; two empty masks agree perfectly and score 1.
pub fn dice<T: Real>(pred: &BinaryMask, truth: &BinaryMask) -> Result<T> {
    let inter = pred.intersection_count(truth)?;
    let total = pred.count() + truth.count();
    if total == 0 {
        return Ok(T::one());
    }
    Ok(T::lit(2.0) * T::from_usize_lossy(inter) / T::from_usize_lossy(total))
}

/// Per-group mean dice in ascending group order. Every group in `groups` must
/// have at least one score; scores for groups not listed are ignored.
pub fn group_means<T: Real>(scores: &[CaseScore<T>], groups: &[GroupId]) -> Result<Vec<GroupPerformance<T>>> {
    let mut acc: BTreeMap<GroupId, (T, usize)> = BTreeMap::new();
    for s in scores {
        let e = acc.entry(s.group).or_insert((T::zero(), 0));
        e.0 += s.dice;
        e.1 += 1;
    }
    let mut declared = groups.to_vec();
    declared.sort_unstable();
    declared.dedup();
    declared
        .into_iter()
        .map(|g| match acc.get(&g) {
            Some(&(sum, n)) => Ok(GroupPerformance {
                group: g,
                mean_dice: sum / T::from_usize_lossy(n),
                count: n,
            }),
            None => Err(Error::MissingGroup(g)),
        })
        .collect()
}

/// Groups present in `scores`, ascending.
pub fn groups_present<T>(scores: &[CaseScore<T>]) -> Vec<GroupId> {
    let mut g: Vec<GroupId> = scores.iter().map(|s| s.group).collect();
    g.sort_unstable();
    g.dedup();
    g
}

pub fn delta<T: Real>(overall: T, per_group: &[GroupPerformance<T>]) -> T {
    per_group.iter().map(|g| (overall - g.mean_dice).abs()).sum()
}

pub fn essp<T: Real>(overall: T, delta: T) -> T {
    overall / (T::one() + delta)
}

/// Pooled dice, per-group means, disparity and equity-scaled performance over
/// the groups present in `scores`.
pub fn fairness_report<T: Real>(scores: &[CaseScore<T>]) -> Result<FairnessReport<T>> {
    fairness_report_for(scores, &groups_present(scores))
}

/// As [`fairness_report`], but every group in `groups` must be represented.
pub fn fairness_report_for<T: Real>(scores: &[CaseScore<T>], groups: &[GroupId]) -> Result<FairnessReport<T>> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let overall = scores.iter().map(|s| s.dice).sum::<T>() / T::from_usize_lossy(scores.len());
    let per_group = group_means(scores, groups)?;
    let delta = delta(overall, &per_group);
    Ok(FairnessReport {
        overall_dice: overall,
        essp: essp(overall, delta),
        per_group,
        delta,
    })
}
