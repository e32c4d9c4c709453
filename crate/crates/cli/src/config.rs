//! Experiment configuration: a TOML file whose every field has a default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fairal::acquisition::ScoringParams;
use fairal::active::AlConfig;
use fairal::surrogate::{BiasPreset, CohortConfig, TrainingHyper};
use fairal::{GroupId, StrategyKind, VolumeShape};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub cohort: CohortSection,
    pub split: SplitSection,
    pub active_learning: AlSection,
    pub training: TrainingSection,
    pub grid: GridSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSection {
    pub preset: BiasPreset,
    pub n_per_group: usize,
    pub shape: [usize; 3],
    /// Overrides the preset's deformation mean.
    pub bias_mu: Option<f64>,
    /// Overrides the preset's deformation standard deviation.
    pub bias_sigma: Option<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Cohort directory; relative paths resolve against the config file.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Held-out cases per group; the lowest case ids of each group.
    pub test_per_group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlSection {
    pub n_initial: usize,
    pub batch_size: usize,
    pub n_cycles: usize,
    pub dilation_radius: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub momentum: f64,
    /// Expected foreground prevalence used to recalibrate the intercept.
    pub prior_prevalence: f64,
    /// Set to false to keep the balanced-sample intercept.
    pub prior_correction: bool,
    /// Seed for the baseline models; active-learning runs derive theirs from the grid seed.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub compositions: Vec<Composition>,
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    /// Worker threads; defaults to the number of logical cores.
    pub jobs: Option<usize>,
    /// Also emit per-cycle rows evaluated on the labeled set.
    pub labeled_rows: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; relative paths resolve against the config file.
    pub dir: PathBuf,
}

impl Default for CohortSection {
    fn default() -> Self {
        Self {
            preset: BiasPreset::Strong,
            n_per_group: 55,
            shape: [CohortConfig::DEFAULT_EXTENT; 3],
            bias_mu: None,
            bias_sigma: None,
            noise_sigma: CohortConfig::DEFAULT_NOISE_SIGMA,
            seed: 0,
            path: PathBuf::from("cohort"),
        }
    }
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { test_per_group: 15 }
    }
}

impl Default for AlSection {
    fn default() -> Self {
        let scoring = ScoringParams::default();
        Self {
            n_initial: 10,
            batch_size: 4,
            n_cycles: 5,
            dilation_radius: scoring.dilation_radius,
            threshold: scoring.threshold,
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        let h = TrainingHyper::default();
        Self {
            learning_rate: h.learning_rate,
            epochs: h.epochs,
            l2: h.l2,
            momentum: h.momentum,
            prior_prevalence: h.prior_prevalence.unwrap_or(0.05),
            prior_correction: h.prior_prevalence.is_some(),
            seed: h.seed,
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            compositions: vec![Composition::new(50), Composition::new(80), Composition::new(20)],
            strategies: StrategyKind::ALL.to_vec(),
            seeds: (0..5).collect(),
            jobs: None,
            labeled_rows: false,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
        }
    }
}

/// Initial labeled-set split, as percentages of group 1 and group 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Composition {
    pub g1_percent: u8,
}

impl Composition {
    pub fn new(g1_percent: u8) -> Self {
        Self { g1_percent }
    }

    pub fn g2_percent(&self) -> u8 {
        100 - self.g1_percent
    }

    /// Group 1 and group 2 counts for `n` initial cases; group 1 is rounded to nearest.
    pub fn counts(&self, n: usize) -> (usize, usize) {
        let g1 = (n * self.g1_percent as usize + 50) / 100;
        (g1, n - g1)
    }

    /// File-name friendly form, e.g. `80-20`.
    pub fn slug(&self) -> String {
        format!("{}-{}", self.g1_percent, self.g2_percent())
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.g1_percent, self.g2_percent())
    }
}

impl FromStr for Composition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("composition `{s}` must look like `50/50` with parts summing to 100");
        let (a, b) = s.split_once('/').ok_or_else(bad)?;
        let a: u8 = a.trim().parse().map_err(|_| bad())?;
        let b: u8 = b.trim().parse().map_err(|_| bad())?;
        if a as u16 + b as u16 != 100 {
            return Err(bad());
        }
        Ok(Self::new(a))
    }
}

impl Serialize for Composition {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Composition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl Config {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> CliResult<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Defaults when no file is given; paths resolve against the working directory.
    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => Self::load(p),
            None => {
                let cfg = Self::default();
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.cohort.path, &mut self.output.dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn cohort_config(&self) -> CliResult<CohortConfig> {
        let c = &self.cohort;
        let [nx, ny, nz] = c.shape;
        let shape = VolumeShape::new(nx, ny, nz).map_err(|e| CliError::Config(e.to_string()))?;
        let (mu, sigma) = c.preset.mu_sigma();
        Ok(CohortConfig {
            shape,
            n_per_group: c.n_per_group,
            bias_mu: c.bias_mu.unwrap_or(mu),
            bias_sigma: c.bias_sigma.unwrap_or(sigma),
            noise_sigma: c.noise_sigma,
            seed: c.seed,
        })
    }

    pub fn training_hyper(&self) -> TrainingHyper {
        let t = &self.training;
        TrainingHyper {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            l2: t.l2,
            momentum: t.momentum,
            prior_prevalence: t.prior_correction.then_some(t.prior_prevalence),
            seed: t.seed,
        }
    }

    /// Engine configuration for one grid cell.
    pub fn al_config(&self, composition: Composition, strategy: StrategyKind, seed: u64) -> AlConfig {
        let a = &self.active_learning;
        let (g1, g2) = composition.counts(a.n_initial);
        AlConfig {
            n_initial: a.n_initial,
            batch_size: a.batch_size,
            n_cycles: a.n_cycles,
            initial_group_counts: vec![(GroupId::G1, g1), (GroupId::G2, g2)],
            strategy,
            scoring: ScoringParams {
                dilation_radius: a.dilation_radius,
                threshold: a.threshold,
            },
            training: self.training_hyper(),
            run_seed: seed,
        }
    }

    /// Cases per group left for the active-learning pool.
    pub fn pool_per_group(&self) -> usize {
        self.cohort.n_per_group.saturating_sub(self.split.test_per_group)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.cohort_config()?
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.split.test_per_group == 0 {
            return bad("split.test_per_group must be positive".into());
        }
        if self.split.test_per_group >= self.cohort.n_per_group {
            return bad(format!(
                "split.test_per_group ({}) leaves no pool out of {} cases per group",
                self.split.test_per_group, self.cohort.n_per_group
            ));
        }
        let a = &self.active_learning;
        if a.n_initial == 0 || a.batch_size == 0 {
            return bad("active_learning.n_initial and batch_size must be positive".into());
        }
        if !(a.threshold > 0.0 && a.threshold < 1.0) {
            return bad(format!("active_learning.threshold {} must lie in (0, 1)", a.threshold));
        }
        self.training_hyper()
            .validate()
            .map_err(|e| CliError::Config(format!("training: {e}")))?;
        let g = &self.grid;
        if g.compositions.is_empty() || g.strategies.is_empty() || g.seeds.is_empty() {
            return bad("grid.compositions, grid.strategies and grid.seeds must be nonempty".into());
        }
        if g.jobs == Some(0) {
            return bad("grid.jobs must be positive".into());
        }
        let pool = self.pool_per_group();
        for comp in &g.compositions {
            let (g1, g2) = comp.counts(a.n_initial);
            if g1 > pool || g2 > pool {
                return bad(format!(
                    "composition {comp} needs {g1}/{g2} initial cases but the pool has {pool} per group"
                ));
            }
            let cfg = self.al_config(*comp, g.strategies[0], 0);
            cfg.validate(2 * pool).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Parses `--seeds`: a comma list (`1,2,5`) and/or half-open ranges (`0..10`).
pub fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::Config(format!("cannot parse seeds `{s}`; use e.g. `0..10` or `1,2,3`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| bad())?;
            let b: u64 = b.parse().map_err(|_| bad())?;
            if b <= a {
                return Err(bad());
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml("", Path::new("/base")).unwrap();
        assert_eq!(cfg.cohort.path, PathBuf::from("/base/cohort"));
        assert_eq!(cfg.output.dir, PathBuf::from("/base/results"));
        assert_eq!(cfg.grid.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.grid.strategies.len(), 4);
        assert_eq!(cfg.split.test_per_group, 15);
        assert_eq!((cfg.active_learning.n_initial, cfg.active_learning.batch_size), (10, 4));
        assert_eq!(cfg.training_hyper(), TrainingHyper::default());
        assert_eq!(
            cfg.cohort_config().unwrap(),
            CohortConfig::preset(BiasPreset::Strong, 55, 0)
        );
    }

    #[test]
    fn partial_sections_and_overrides() {
        let text = r#"
            [cohort]
            preset = "weak"
            n_per_group = 30
            path = "/abs/cohort"
            [grid]
            compositions = ["80/20"]
            strategies = ["random", "weighted_localized_entropy"]
            seeds = [7]
        "#;
        let cfg = Config::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.cohort.preset, BiasPreset::Weak);
        assert_eq!(cfg.cohort.path, PathBuf::from("/abs/cohort"));
        assert_eq!(cfg.grid.compositions, vec![Composition::new(80)]);
        let c = cfg.cohort_config().unwrap();
        assert_eq!((c.bias_mu, c.bias_sigma), (2.0, 2.0));
        let off = Config::from_toml("[training]\nprior_correction = false", Path::new(".")).unwrap();
        assert_eq!(off.training_hyper().prior_prevalence, None);
        let al = cfg.al_config(Composition::new(80), StrategyKind::Random, 7);
        assert_eq!(al.initial_group_counts, vec![(GroupId::G1, 8), (GroupId::G2, 2)]);
        assert_eq!(al.run_seed, 7);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let base = Path::new(".");
        for text in [
            "[cohort]\nsize = 3",
            "[cohort]\nn_per_group = 0",
            "[cohort]\npreset = \"extreme\"",
            "[grid]\ncompositions = [\"60/30\"]",
            "[grid]\nseeds = []",
            "[grid]\nstrategies = [\"greedy\"]",
            "[active_learning]\nthreshold = 1.5",
            "[active_learning]\nn_cycles = 50",
            "[split]\ntest_per_group = 55",
            "[training]\nmomentum = 1.0",
            "[training]\nprior_prevalence = 0.0",
        ] {
            assert!(
                matches!(Config::from_toml(text, base), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn composition_round_trip() {
        for s in ["50/50", "80/20", "20/80", "0/100"] {
            assert_eq!(s.parse::<Composition>().unwrap().to_string(), s);
        }
        assert_eq!(Composition::new(50).counts(10), (5, 5));
        assert_eq!(Composition::new(80).counts(10), (8, 2));
        assert_eq!(Composition::new(20).counts(10), (2, 8));
        assert_eq!(Composition::new(80).slug(), "80-20");
        assert!("50-50".parse::<Composition>().is_err());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 9,0..2").unwrap(), vec![4, 9, 0, 1]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
