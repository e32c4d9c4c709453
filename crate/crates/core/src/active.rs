//! Pool-based active-learning engine.
//!
//! Each cycle retrains the segmenter from scratch on the labeled set, scores
//! the unlabeled pool with the configured strategy, moves the top batch into
//! the labeled set (ground truth acts as the annotator) and evaluates the
//! retrained model on the labeled set and a fixed held-out test set.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{
    compute_group_weights, score_candidates, select_batch, AcquisitionScore, Candidate, GroupWeightTable,
    ScoringParams, StrategyKind,
};
use crate::error::{Error, Result};
use crate::metrics::{dice, fairness_report, fairness_report_for, CaseId, CaseScore, FairnessReport, GroupId};
use crate::real::Real;
use crate::seed::{derive_seed, stream};
use crate::surrogate::{predict_features, train, Case, SegmenterParams, TrainingHyper};
use crate::volume::threshold;

#[derive(Debug, Clone, PartialEq)]
pub struct AlConfig {
    pub n_initial: usize,
    pub batch_size: usize,
    pub n_cycles: usize,
    /// Initial labeled cases drawn from each group; must sum to `n_initial`.
    pub initial_group_counts: Vec<(GroupId, usize)>,
    pub strategy: StrategyKind,
    pub scoring: ScoringParams,
    /// Optimizer settings. The seed field is ignored; per-cycle training seeds derive from `run_seed`.
    pub training: TrainingHyper,
    pub run_seed: u64,
}

impl AlConfig {
    /// Ten initial cases, batches of four, five cycles.
    pub fn with_counts(strategy: StrategyKind, g1: usize, g2: usize, run_seed: u64) -> Self {
        Self {
            n_initial: g1 + g2,
            batch_size: 4,
            n_cycles: 5,
            initial_group_counts: vec![(GroupId::G1, g1), (GroupId::G2, g2)],
            strategy,
            scoring: ScoringParams::default(),
            training: TrainingHyper::default(),
            run_seed,
        }
    }

    pub fn validate(&self, pool_size: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_initial == 0 {
            return bad("n_initial must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let total: usize = self.initial_group_counts.iter().map(|&(_, n)| n).sum();
        if total != self.n_initial {
            return bad(format!(
                "initial group counts sum to {total}, expected {}",
                self.n_initial
            ));
        }
        let needed = self.n_initial + self.n_cycles * self.batch_size;
        if needed > pool_size {
            return bad(format!("schedule needs {needed} cases but the pool has {pool_size}"));
        }
        Ok(())
    }

    fn training_for_cycle(&self, cycle: usize) -> TrainingHyper {
        TrainingHyper {
            seed: derive_seed(derive_seed(self.run_seed, stream::TRAINING), cycle as u64),
            ..self.training
        }
    }

    fn random_seed_for_cycle(&self, cycle: usize) -> u64 {
        derive_seed(derive_seed(self.run_seed, stream::RANDOM_SCORES), cycle as u64)
    }
}

/// Labeled/unlabeled partition of the training pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolState {
    pub labeled: BTreeSet<CaseId>,
    pub unlabeled: BTreeSet<CaseId>,
    pub cycle: usize,
}

impl PoolState {
    pub fn n_labeled(&self) -> usize {
        self.labeled.len()
    }

    fn move_to_labeled(&mut self, ids: &[CaseId]) -> Result<()> {
        for id in ids {
            if !self.unlabeled.remove(id) {
                return Err(Error::UnknownCase(*id));
            }
            self.labeled.insert(*id);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord<T> {
    pub cycle: usize,
    pub n_labeled: usize,
    /// Cases added in this cycle; empty for the initial record.
    pub selected: Vec<(CaseId, GroupId)>,
    pub labeled_report: FairnessReport<T>,
    pub test_report: FairnessReport<T>,
    /// Weights that drove this cycle's selection, for the weighted strategy.
    pub weights: Option<GroupWeightTable<T>>,
    pub group1_ratio: T,
    pub scores: Vec<AcquisitionScore<T>>,
}

/// Draws the initial labeled set: `initial_group_counts` cases from each group,
/// chosen by a shuffle seeded from `run_seed`.
pub fn init_pool<T: Real>(cohort: &[Case<T>], cfg: &AlConfig) -> Result<PoolState> {
    cfg.validate(cohort.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.run_seed, stream::INITIAL_POOL));
    let mut labeled = BTreeSet::new();
    let mut counts = cfg.initial_group_counts.clone();
    counts.sort_by_key(|&(g, _)| g);
    for (group, count) in counts {
        let mut ids: Vec<CaseId> = cohort.iter().filter(|c| c.group == group).map(|c| c.case_id).collect();
        ids.sort_unstable();
        if ids.len() < count {
            return Err(Error::InvalidConfig(format!(
                "{count} initial {group} cases requested, {} available",
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        labeled.extend(ids.into_iter().take(count));
    }
    let unlabeled = cohort
        .iter()
        .map(|c| c.case_id)
        .filter(|id| !labeled.contains(id))
        .collect();
    Ok(PoolState {
        labeled,
        unlabeled,
        cycle: 0,
    })
}

/// Active-learning session over one training pool and test set. Holds the model
/// trained on the current labeled set so each cycle trains exactly once.
pub struct ActiveLearner<'a, T> {
    cfg: &'a AlConfig,
    index: HashMap<CaseId, &'a Case<T>>,
    test_set: &'a [Case<T>],
    groups: Vec<GroupId>,
    state: PoolState,
    model: SegmenterParams<T>,
    labeled_scores: Vec<CaseScore<T>>,
}

impl<'a, T: Real> ActiveLearner<'a, T> {
    pub fn new(state: PoolState, cohort: &'a [Case<T>], cfg: &'a AlConfig, test_set: &'a [Case<T>]) -> Result<Self> {
        let index: HashMap<CaseId, &Case<T>> = cohort.iter().map(|c| (c.case_id, c)).collect();
        if index.len() != cohort.len() {
            return Err(Error::InvalidConfig("duplicate case ids in cohort".into()));
        }
        if test_set.is_empty() {
            return Err(Error::InvalidConfig("test set is empty".into()));
        }
        let mut groups: Vec<GroupId> = cohort.iter().chain(test_set).map(|c| c.group).collect();
        groups.sort_unstable();
        groups.dedup();
        let mut learner = Self {
            cfg,
            index,
            test_set,
            groups,
            state,
            model: SegmenterParams::zero(),
            labeled_scores: Vec::new(),
        };
        learner.check_partition()?;
        learner.retrain()?;
        Ok(learner)
    }

    pub fn state(&self) -> &PoolState {
        &self.state
    }

    pub fn model(&self) -> &SegmenterParams<T> {
        &self.model
    }

    pub fn into_state(self) -> PoolState {
        self.state
    }

    fn check_partition(&self) -> Result<()> {
        let s = &self.state;
        let disjoint = s.labeled.is_disjoint(&s.unlabeled);
        let covers = s.labeled.len() + s.unlabeled.len() == self.index.len()
            && s.labeled
                .iter()
                .chain(&s.unlabeled)
                .all(|id| self.index.contains_key(id));
        if !(disjoint && covers) {
            return Err(Error::InvalidConfig("pool state does not partition the cohort".into()));
        }
        Ok(())
    }

    fn case(&self, id: CaseId) -> Result<&'a Case<T>> {
        self.index.get(&id).copied().ok_or(Error::UnknownCase(id))
    }

    fn case_dice(&self, case: &Case<T>) -> Result<CaseScore<T>> {
        let probs = predict_features(&self.model, case.features());
        let pred = threshold(&probs, self.cfg.scoring.threshold)?;
        CaseScore::new(case.case_id, case.group, dice(&pred, case.truth())?)
    }

    fn retrain(&mut self) -> Result<()> {
        let labeled: Vec<&Case<T>> = self
            .state
            .labeled
            .iter()
            .map(|&id| self.case(id))
            .collect::<Result<_>>()?;
        self.model = train(&labeled, &self.cfg.training_for_cycle(self.state.cycle))?;
        self.labeled_scores = labeled.iter().map(|c| self.case_dice(c)).collect::<Result<_>>()?;
        Ok(())
    }

    fn group1_ratio(&self) -> Result<T> {
        let g1 = self
            .state
            .labeled
            .iter()
            .map(|&id| self.case(id))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|c| c.group == GroupId::G1)
            .count();
        Ok(T::from_usize_lossy(g1) / T::from_usize_lossy(self.state.labeled.len()))
    }

    fn record(
        &self,
        selected: Vec<(CaseId, GroupId)>,
        weights: Option<GroupWeightTable<T>>,
        scores: Vec<AcquisitionScore<T>>,
    ) -> Result<CycleRecord<T>> {
        let test_scores: Vec<CaseScore<T>> = self.test_set.iter().map(|c| self.case_dice(c)).collect::<Result<_>>()?;
        Ok(CycleRecord {
            cycle: self.state.cycle,
            n_labeled: self.state.labeled.len(),
            selected,
            labeled_report: fairness_report(&self.labeled_scores)?,
            test_report: fairness_report_for(&test_scores, &self.groups)?,
            weights,
            group1_ratio: self.group1_ratio()?,
            scores,
        })
    }

    /// Evaluation of the current model without any selection.
    pub fn snapshot(&self) -> Result<CycleRecord<T>> {
        self.record(Vec::new(), None, Vec::new())
    }

    /// One full cycle: weight, score, select, label, retrain, evaluate.
    pub fn step(&mut self) -> Result<CycleRecord<T>> {
        let b = self.cfg.batch_size;
        if self.state.unlabeled.len() < b {
            return Err(Error::PoolExhausted {
                available: self.state.unlabeled.len(),
                needed: b,
            });
        }
        let weights = if self.cfg.strategy.uses_weights() {
            let labeled_groups: Vec<GroupId> = self.cfg.initial_group_counts.iter().map(|&(g, _)| g).collect();
            Some(compute_group_weights(&self.labeled_scores, &labeled_groups)?)
        } else {
            None
        };

        let pool: Vec<&Case<T>> = self
            .state
            .unlabeled
            .iter()
            .map(|&id| self.case(id))
            .collect::<Result<_>>()?;
        let probs: Vec<_> = pool
            .iter()
            .map(|c| predict_features(&self.model, c.features()))
            .collect();
        let candidates: Vec<Candidate<'_, T>> = pool
            .iter()
            .zip(&probs)
            .map(|(c, p)| Candidate {
                case_id: c.case_id,
                group: c.group,
                probs: p,
            })
            .collect();
        let scores = score_candidates(
            self.cfg.strategy,
            &candidates,
            weights.as_ref(),
            self.cfg.scoring,
            self.cfg.random_seed_for_cycle(self.state.cycle),
        )?;
        let chosen = select_batch(&scores, b)?;
        let selected = chosen
            .iter()
            .map(|&id| Ok((id, self.case(id)?.group)))
            .collect::<Result<Vec<_>>>()?;

        self.state.move_to_labeled(&chosen)?;
        self.state.cycle += 1;
        self.retrain()?;
        self.record(selected, weights, scores)
    }
}

/// Runs one cycle from `state`, returning the advanced state and its record.
pub fn run_cycle<T: Real>(
    state: PoolState,
    cohort: &[Case<T>],
    cfg: &AlConfig,
    test_set: &[Case<T>],
) -> Result<(PoolState, CycleRecord<T>)> {
    let mut learner = ActiveLearner::new(state, cohort, cfg, test_set)?;
    let record = learner.step()?;
    Ok((learner.into_state(), record))
}

/// Initial evaluation followed by `n_cycles` cycles: `n_cycles + 1` records.
pub fn run_experiment<T: Real>(
    cfg: &AlConfig,
    cohort: &[Case<T>],
    test_set: &[Case<T>],
) -> Result<Vec<CycleRecord<T>>> {
    let state = init_pool(cohort, cfg)?;
    let mut learner = ActiveLearner::new(state, cohort, cfg, test_set)?;
    let mut records = Vec::with_capacity(cfg.n_cycles + 1);
    records.push(learner.snapshot()?);
    for _ in 0..cfg.n_cycles {
        records.push(learner.step()?);
    }
    Ok(records)
}
