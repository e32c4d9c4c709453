use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::FeatureVolume;
use crate::error::{Error, Result};
use crate::metrics::{CaseId, GroupId};
use crate::real::Real;
use crate::seed::{derive_seed, stream};
use crate::volume::{BinaryMask, ScalarVolume, VolumeShape};

/// Smallest extent that still contains the target at every sampled scale and offset.
pub const MIN_EXTENT: usize = 10;

const SEMI_AXES: [f64; 3] = [0.22, 0.15, 0.15];
const SCALE_RANGE: (f64, f64) = (0.85, 1.15);
const AXIS_JITTER: (f64, f64) = (0.93, 1.07);
const MAX_OFFSET: f64 = 0.06;
/// Largest background ramp amplitude, relative to the foreground contrast.
const GRADIENT_MAX: f64 = 1.0;
/// Half-angle of the cone, around +x, in which the localized deformation acts.
const BUMP_HALF_ANGLE: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasPreset {
    Strong,
    Weak,
    None,
}

impl BiasPreset {
    /// Mean and standard deviation of the localized deformation magnitude, in voxels.
    pub fn mu_sigma(&self) -> (f64, f64) {
        match self {
            BiasPreset::Strong => (4.0, 2.0),
            BiasPreset::Weak => (2.0, 2.0),
            BiasPreset::None => (0.0, 0.0),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BiasPreset::Strong => "strong",
            BiasPreset::Weak => "weak",
            BiasPreset::None => "none",
        }
    }
}

impl fmt::Display for BiasPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(BiasPreset::Strong),
            "weak" => Ok(BiasPreset::Weak),
            "none" => Ok(BiasPreset::None),
            other => Err(Error::InvalidConfig(format!("unknown bias preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub shape: VolumeShape,
    pub n_per_group: usize,
    pub bias_mu: f64,
    pub bias_sigma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl CohortConfig {
    pub const DEFAULT_EXTENT: usize = 24;
    pub const DEFAULT_NOISE_SIGMA: f64 = 2.0;

    pub fn preset(preset: BiasPreset, n_per_group: usize, seed: u64) -> Self {
        let (bias_mu, bias_sigma) = preset.mu_sigma();
        Self {
            shape: VolumeShape::cube(Self::DEFAULT_EXTENT).expect("default shape"),
            n_per_group,
            bias_mu,
            bias_sigma,
            noise_sigma: Self::DEFAULT_NOISE_SIGMA,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_per_group == 0 {
            return bad("n_per_group must be at least 1".into());
        }
        if self.bias_sigma < 0.0 || !self.bias_mu.is_finite() || !self.bias_sigma.is_finite() {
            return bad(format!(
                "bias distribution N({}, {}) is invalid",
                self.bias_mu, self.bias_sigma
            ));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma));
        }
        let min = self.shape.dims().into_iter().min().unwrap_or(0);
        if min < MIN_EXTENT {
            return bad(format!(
                "volume {} too small to contain the target (every extent must be >= {MIN_EXTENT})",
                self.shape
            ));
        }
        Ok(())
    }

    pub fn total_cases(&self) -> usize {
        2 * self.n_per_group
    }
}

/// One synthetic subject: image, ground-truth mask and group label.
#[derive(Debug, Clone, PartialEq)]
pub struct Case<T> {
    pub case_id: CaseId,
    pub group: GroupId,
    features: FeatureVolume<T>,
    truth: BinaryMask,
}

impl<T: Real> Case<T> {
    pub fn new(case_id: CaseId, group: GroupId, image: ScalarVolume<T>, truth: BinaryMask) -> Result<Self> {
        if image.shape() != truth.shape() {
            return Err(Error::ShapeMismatch {
                left: image.shape(),
                right: truth.shape(),
            });
        }
        if truth.count() == 0 {
            return Err(Error::InvalidConfig(format!("{case_id} has an empty target")));
        }
        Ok(Self {
            case_id,
            group,
            features: FeatureVolume::new(image),
            truth,
        })
    }

    pub fn image(&self) -> &ScalarVolume<T> {
        self.features.image()
    }

    pub fn features(&self) -> &FeatureVolume<T> {
        &self.features
    }

    pub fn truth(&self) -> &BinaryMask {
        &self.truth
    }
}

struct Geometry {
    center: [f64; 3],
    axes: [f64; 3],
    bump: f64,
}

impl Geometry {
    fn contains(&self, p: [f64; 3]) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if r == 0.0 {
            return true;
        }
        let u = [d[0] / r, d[1] / r, d[2] / r];
        let surface = 1.0
            / ((u[0] / self.axes[0]).powi(2) + (u[1] / self.axes[1]).powi(2) + (u[2] / self.axes[2]).powi(2)).sqrt();
        let theta = u[0].clamp(-1.0, 1.0).acos();
        let lift = if theta < BUMP_HALF_ANGLE {
            let c = (std::f64::consts::FRAC_PI_2 * theta / BUMP_HALF_ANGLE).cos();
            self.bump * c * c
        } else {
            0.0
        };
        r <= surface + lift
    }
}

fn generate_case<T: Real>(cfg: &CohortConfig, index: usize) -> Result<Case<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, stream::CASE), index as u64));
    let group = if index.is_multiple_of(2) {
        GroupId::G1
    } else {
        GroupId::G2
    };
    let shape = cfg.shape;
    let dims = shape.dims().map(|n| n as f64);

    // global variation, shared by both groups
    let scale = rng.gen_range(SCALE_RANGE.0..SCALE_RANGE.1);
    let mut axes = [0.0; 3];
    let mut center = [0.0; 3];
    for a in 0..3 {
        axes[a] = SEMI_AXES[a] * dims[a] * scale * rng.gen_range(AXIS_JITTER.0..AXIS_JITTER.1);
    }
    for a in 0..3 {
        center[a] = (dims[a] - 1.0) / 2.0 + rng.gen_range(-MAX_OFFSET..MAX_OFFSET) * dims[a];
    }
    let gradient_amp = rng.gen_range(0.0..GRADIENT_MAX);
    let mut dir: [f64; 3] = [0.0; 3];
    for d in &mut dir {
        *d = StandardNormal.sample(&mut rng);
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let half_extent = dims.iter().copied().fold(0.0, f64::max) / 2.0;

    // localized deformation, first group only
    let bump = if group == GroupId::G1 {
        let m = if cfg.bias_sigma > 0.0 {
            Normal::new(cfg.bias_mu, cfg.bias_sigma)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .sample(&mut rng)
        } else {
            cfg.bias_mu
        };
        m.max(0.0)
    } else {
        0.0
    };

    let geo = Geometry { center, axes, bump };
    let truth = BinaryMask::from_fn(shape, |x, y, z| geo.contains([x as f64, y as f64, z as f64]));
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let centre = dims.map(|n| (n - 1.0) / 2.0);
    let data = (0..shape.len())
        .map(|i| {
            let (x, y, z) = shape.coords(i);
            let p = [x as f64, y as f64, z as f64];
            let ramp = (0..3).map(|a| dir[a] / norm * (p[a] - centre[a])).sum::<f64>() / half_extent;
            let fg = if truth.data()[i] { 1.0 } else { 0.0 };
            let v = fg + gradient_amp * ramp + noise.sample(&mut rng);
            // stored as float32 on disk; quantize now so export/import is lossless
            T::lit(v as f32 as f64)
        })
        .collect();
    let image = ScalarVolume::new(shape, data)?;
    Case::new(CaseId(index as u32), group, image, truth)
}

/// Deterministic cohort of `2 * n_per_group` cases; even case ids are `G1`
/// (localized deformation plus global variation), odd ids are `G2`.
pub fn generate_cohort<T: Real>(cfg: &CohortConfig) -> Result<Vec<Case<T>>> {
    cfg.validate()?;
    (0..cfg.total_cases()).map(|i| generate_case(cfg, i)).collect()
}
