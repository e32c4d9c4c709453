use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cohort::Case;
use super::features::{FeatureVolume, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::seed::derive_seed;
use crate::volume::{ProbabilityVolume, ScalarVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Nesterov momentum coefficient in [0, 1); zero gives plain gradient descent.
    pub momentum: f64,
    /// Expected foreground prevalence used to undo the balanced sampling's
    /// intercept shift; `None` keeps the balanced-sample intercept.
    pub prior_prevalence: Option<f64>,
    pub seed: u64,
}

impl Default for TrainingHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 300,
            l2: 1e-4,
            momentum: 0.95,
            prior_prevalence: Some(0.05),
            seed: 0,
        }
    }
}

impl TrainingHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 {} must be finite and >= 0", self.l2));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if let Some(tau) = self.prior_prevalence {
            if !(tau > 0.0 && tau < 1.0) {
                return bad(format!("prior_prevalence {tau} must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Logistic-model weights; index 0 is the bias term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmenterParams<T> {
    pub weights: [T; FEATURE_COUNT],
}

impl<T: Real> SegmenterParams<T> {
    pub fn zero() -> Self {
        Self {
            weights: [T::zero(); FEATURE_COUNT],
        }
    }

    #[inline]
    fn logit(&self, phi: &[T; FEATURE_COUNT]) -> T {
        self.weights
            .iter()
            .zip(phi)
            .fold(T::zero(), |acc, (&w, &f)| acc + w * f)
    }
}

#[inline]
fn sigmoid<T: Real>(s: T) -> T {
    if s >= T::zero() {
        T::one() / (T::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^s)` without overflow.
#[inline]
fn softplus<T: Real>(s: T) -> T {
    s.max(T::zero()) + (-s.abs()).exp().ln_1p()
}

/// Class-balanced voxel sample: every foreground voxel of each case plus an
/// equal number of background voxels drawn without replacement.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    rows: Vec<[T; FEATURE_COUNT]>,
    labels: Vec<T>,
}

impl<T: Real> TrainingSet<T> {
    pub fn build(cases: &[&Case<T>], seed: u64) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for case in cases {
            let truth = case.truth().data();
            let (fg, bg): (Vec<usize>, Vec<usize>) = (0..truth.len()).partition(|&i| truth[i]);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::from(case.case_id.0)));
            let picked = sample(&mut rng, bg.len(), fg.len().min(bg.len()));
            let feats = case.features();
            for i in fg {
                rows.push(feats.at(i));
                labels.push(T::one());
            }
            for k in picked.iter() {
                rows.push(feats.at(bg[k]));
                labels.push(T::zero());
            }
        }
        Ok(Self { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Share of foreground rows; one half unless a case has more foreground than background.
    pub fn foreground_rate(&self) -> f64 {
        let fg = self.labels.iter().filter(|&&y| y > T::zero()).count();
        fg as f64 / self.len() as f64
    }

    /// Mean binary cross-entropy plus `l2 * |w|^2` over the non-bias weights.
    pub fn loss(&self, params: &SegmenterParams<T>, l2: T) -> T {
        let data: T = self
            .rows
            .iter()
            .zip(&self.labels)
            .map(|(phi, &y)| {
                let s = params.logit(phi);
                softplus(s) - y * s
            })
            .sum();
        let penalty: T = params.weights[1..].iter().map(|&w| w * w).sum();
        data / T::from_usize_lossy(self.len()) + l2 * penalty
    }

    pub fn gradient(&self, params: &SegmenterParams<T>, l2: T) -> [T; FEATURE_COUNT] {
        let mut g = [T::zero(); FEATURE_COUNT];
        for (phi, &y) in self.rows.iter().zip(&self.labels) {
            let r = sigmoid(params.logit(phi)) - y;
            for (gj, &f) in g.iter_mut().zip(phi) {
                *gj += r * f;
            }
        }
        let n = T::from_usize_lossy(self.len());
        for (j, gj) in g.iter_mut().enumerate() {
            *gj /= n;
            if j > 0 {
                *gj += T::lit(2.0) * l2 * params.weights[j];
            }
        }
        g
    }
}

/// Full-batch gradient descent with Nesterov momentum from zero weights,
/// followed by a prior correction of the intercept: the balanced sample's
/// foreground rate is replaced by `prior_prevalence`. Zero epochs returns the
/// zero initialization untouched.
pub fn train<T: Real>(labeled: &[&Case<T>], hyper: &TrainingHyper) -> Result<SegmenterParams<T>> {
    hyper.validate()?;
    let set = TrainingSet::build(labeled, hyper.seed)?;
    let lr = T::lit(hyper.learning_rate);
    let l2 = T::lit(hyper.l2);
    let mu = T::lit(hyper.momentum);
    let mut params = SegmenterParams::zero();
    let mut velocity = [T::zero(); FEATURE_COUNT];
    for _ in 0..hyper.epochs {
        let mut ahead = params;
        for (w, &v) in ahead.weights.iter_mut().zip(&velocity) {
            *w += mu * v;
        }
        let g = set.gradient(&ahead, l2);
        for ((w, v), gj) in params.weights.iter_mut().zip(velocity.iter_mut()).zip(g) {
            *v = mu * *v - lr * gj;
            *w += *v;
        }
    }
    if hyper.epochs > 0 {
        if let Some(tau) = hyper.prior_prevalence {
            params.weights[0] += T::lit(logit(tau) - logit(set.foreground_rate()));
        }
    }
    Ok(params)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn predict_features<T: Real>(params: &SegmenterParams<T>, features: &FeatureVolume<T>) -> ProbabilityVolume<T> {
    let shape = features.shape();
    let data = (0..shape.len())
        .map(|i| sigmoid(params.logit(&features.at(i))))
        .collect();
    ProbabilityVolume::new(shape, data).expect("sigmoid output lies in [0, 1]")
}

pub fn predict<T: Real>(params: &SegmenterParams<T>, image: &ScalarVolume<T>) -> ProbabilityVolume<T> {
    predict_features(params, &FeatureVolume::new(image.clone()))
}
