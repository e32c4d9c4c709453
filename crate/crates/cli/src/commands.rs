//! Subcommand implementations, usable without the binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fairal::active::run_experiment;
use fairal::metrics::{dice, fairness_report_for, CaseScore};
use fairal::surrogate::store::{export_cohort, import_cohort, sha256_file, CohortManifest, MANIFEST_FILE};
use fairal::surrogate::{generate_cohort, predict_features, train};
use fairal::volume::threshold;
use fairal::{Case, CycleRecord, FairnessReport, GroupId, StrategyKind};
use log::{error, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Composition, Config};
use crate::error::{CliError, CliResult};
use crate::results::{run_id, write_rows, write_scores, EvalSplit, ResultRow, RESULTS_SCHEMA_VERSION};

pub const RESULTS_FILE: &str = "results.csv";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const SCORES_DIR: &str = "scores";

const GROUPS: [GroupId; 2] = [GroupId::G1, GroupId::G2];

/// Writes the cohort described by `cfg` to `out` (default: the configured path).
pub fn cmd_generate(cfg: &Config, out: Option<&Path>) -> CliResult<(PathBuf, CohortManifest)> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.cohort.path.clone());
    let cohort_cfg = cfg.cohort_config()?;
    let cases: Vec<Case> = generate_cohort(&cohort_cfg).map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(&dir)?;
    let manifest = export_cohort(&dir, &cohort_cfg, &cases)?;
    info!("wrote {} cases to {}", cases.len(), dir.display());
    Ok((dir, manifest))
}

/// Held-out test cases and the active-learning pool.
#[derive(Debug)]
pub struct Split {
    pub pool: Vec<Case>,
    pub test: Vec<Case>,
}

/// The first `test_per_group` cases of each group (by case id) are held out.
pub fn split_cohort(cases: Vec<Case>, test_per_group: usize) -> CliResult<Split> {
    let mut cases = cases;
    cases.sort_by_key(|c| c.case_id);
    let mut taken: BTreeMap<GroupId, usize> = BTreeMap::new();
    let (mut pool, mut test) = (Vec::new(), Vec::new());
    for c in cases {
        let n = taken.entry(c.group).or_default();
        if *n < test_per_group {
            *n += 1;
            test.push(c);
        } else {
            pool.push(c);
        }
    }
    for g in GROUPS {
        if taken.get(&g).copied().unwrap_or(0) < test_per_group {
            return Err(CliError::Data(format!(
                "cohort has fewer than {test_per_group} cases of {g}"
            )));
        }
    }
    Ok(Split { pool, test })
}

/// Loads the configured cohort and checks it was generated from the same settings.
pub fn load_split(cfg: &Config) -> CliResult<(CohortManifest, Split)> {
    let dir = &cfg.cohort.path;
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(CliError::Data(format!(
            "no cohort at {}; run `fairal generate` first",
            dir.display()
        )));
    }
    let (manifest, cases) = import_cohort::<f64>(dir).map_err(|e| CliError::Data(e.to_string()))?;
    if manifest.generator != cfg.cohort_config()? {
        return Err(CliError::Config(format!(
            "cohort at {} was generated with different settings; regenerate it",
            dir.display()
        )));
    }
    let split = split_cohort(cases, cfg.split.test_per_group)?;
    Ok((manifest, split))
}

fn evaluate(params: &fairal::SegmenterParams, cases: &[Case], t: f64) -> CliResult<FairnessReport> {
    let scores = cases
        .iter()
        .map(|c| {
            let mask = threshold(&predict_features(params, c.features()), t)?;
            CaseScore::new(c.case_id, c.group, dice(&mask, c.truth())?)
        })
        .collect::<fairal::Result<Vec<_>>>()?;
    Ok(fairness_report_for(&scores, &GROUPS)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub model: String,
    pub bias_preset: String,
    pub n_train: usize,
    pub dsc_overall: f64,
    pub dsc_g1: f64,
    pub dsc_g2: f64,
    pub delta: f64,
    pub essp: f64,
}

/// Pooled, group-1-only and group-2-only models on the full pool, scored on the test split.
pub fn cmd_baseline(cfg: &Config, out: Option<&Path>) -> CliResult<Vec<BaselineRow>> {
    let (_, split) = load_split(cfg)?;
    let hyper = cfg.training_hyper();
    let t = cfg.active_learning.threshold;
    let variants: [(&str, Option<GroupId>); 3] = [
        ("pooled", None),
        ("group1_only", Some(GroupId::G1)),
        ("group2_only", Some(GroupId::G2)),
    ];
    let rows = variants
        .par_iter()
        .map(|&(name, only)| {
            let train_set: Vec<&Case> = split
                .pool
                .iter()
                .filter(|c| only.is_none_or(|g| c.group == g))
                .collect();
            let params = train(&train_set, &hyper)?;
            let r = evaluate(&params, &split.test, t)?;
            Ok(BaselineRow {
                model: name.to_string(),
                bias_preset: cfg.cohort.preset.to_string(),
                n_train: train_set.len(),
                dsc_overall: r.overall_dice,
                dsc_g1: r.group_dice(GroupId::G1).unwrap_or(f64::NAN),
                dsc_g2: r.group_dice(GroupId::G2).unwrap_or(f64::NAN),
                delta: r.delta,
                essp: r.essp,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir)?;
    let mut wtr = csv::Writer::from_path(dir.join(BASELINE_FILE))?;
    for r in &rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(rows)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub jobs: Option<usize>,
    pub dump_scores: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run_id: String,
    pub composition: Composition,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub results_schema_version: u32,
    pub config: Config,
    pub jobs: usize,
    pub cohort_seed: u64,
    pub cohort_manifest_sha256: String,
    pub runs: Vec<RunEntry>,
    pub started_at: String,
    pub finished_at: String,
    /// sha-256 of every emitted file, keyed by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub manifest: RunManifest,
}

struct Cell {
    composition: Composition,
    strategy: StrategyKind,
    seed: u64,
    run_id: String,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn cell_rows(cfg: &Config, cell: &Cell, records: &[CycleRecord]) -> Vec<ResultRow> {
    let preset = cfg.cohort.preset.to_string();
    let mut splits = vec![EvalSplit::Test];
    if cfg.grid.labeled_rows {
        splits.push(EvalSplit::Labeled);
    }
    splits
        .into_iter()
        .flat_map(|split| {
            let preset = &preset;
            records.iter().map(move |rec| {
                ResultRow::from_record(
                    &cell.run_id,
                    preset,
                    cell.composition,
                    cell.strategy,
                    cell.seed,
                    rec,
                    split,
                )
            })
        })
        .collect()
}

/// Runs every (composition, strategy, seed) cell. Rows are written in grid
/// order regardless of worker count. A failing cell is logged and skipped;
/// the outputs are still written and `PartialFailure` is returned.
pub fn cmd_run(cfg: &Config, opts: &RunOptions) -> CliResult<RunOutcome> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let mut cfg = cfg.clone();
    if let Some(seeds) = &opts.seeds {
        cfg.grid.seeds = seeds.clone();
    }
    let jobs = opts.jobs.or(cfg.grid.jobs).unwrap_or_else(default_jobs);
    cfg.grid.jobs = Some(jobs);
    cfg.validate()?;

    let (_, split) = load_split(&cfg)?;
    let cohort_manifest_sha256 = sha256_file(&cfg.cohort.path.join(MANIFEST_FILE))?;
    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out_dir)?;
    if opts.dump_scores {
        fs::create_dir_all(out_dir.join(SCORES_DIR))?;
    }

    let preset = cfg.cohort.preset.to_string();
    let mut cells = Vec::new();
    for &composition in &cfg.grid.compositions {
        for &strategy in &cfg.grid.strategies {
            for &seed in &cfg.grid.seeds {
                let run_id = run_id(&preset, composition, strategy, seed);
                cells.push(Cell {
                    composition,
                    strategy,
                    seed,
                    run_id,
                });
            }
        }
    }
    info!("running {} cells on {jobs} worker(s)", cells.len());

    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))?;
    let outcomes: Vec<CliResult<(Vec<ResultRow>, Vec<String>)>> = workers.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let al = cfg.al_config(cell.composition, cell.strategy, cell.seed);
                let records = run_experiment(&al, &split.pool, &split.test)?;
                let mut dumped = Vec::new();
                if opts.dump_scores {
                    for rec in records.iter().filter(|r| !r.scores.is_empty()) {
                        let name = format!("{SCORES_DIR}/{}_cycle{}.csv", cell.run_id, rec.cycle);
                        write_scores(&out_dir.join(&name), &rec.scores)?;
                        dumped.push(name);
                    }
                }
                Ok((cell_rows(&cfg, cell, &records), dumped))
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut dumped = Vec::new();
    let mut failed = 0;
    for (cell, outcome) in cells.iter().zip(outcomes) {
        let err = match outcome {
            Ok((r, d)) => {
                rows.extend(r);
                dumped.extend(d);
                None
            }
            Err(e) => {
                error!("cell {} failed: {e}", cell.run_id);
                failed += 1;
                Some(e.to_string())
            }
        };
        runs.push(RunEntry {
            run_id: cell.run_id.clone(),
            composition: cell.composition,
            strategy: cell.strategy,
            seed: cell.seed,
            error: err,
        });
    }

    let results_path = out_dir.join(RESULTS_FILE);
    write_rows(std::io::BufWriter::new(fs::File::create(&results_path)?), &rows)?;
    let mut outputs = BTreeMap::new();
    for name in std::iter::once(RESULTS_FILE.to_string()).chain(dumped) {
        outputs.insert(name.clone(), sha256_file(&out_dir.join(&name))?);
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        results_schema_version: RESULTS_SCHEMA_VERSION,
        cohort_seed: cfg.cohort.seed,
        cohort_manifest_sha256,
        config: cfg,
        jobs,
        runs,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    fs::write(
        out_dir.join(RUN_MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    info!("wrote {} rows to {}", rows.len(), results_path.display());
    if failed > 0 {
        warn!("{failed} of {} cells failed", manifest.runs.len());
        return Err(CliError::PartialFailure {
            failed,
            total: manifest.runs.len(),
        });
    }
    Ok(RunOutcome {
        out_dir,
        rows,
        manifest,
    })
}
