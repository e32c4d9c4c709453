//! Results CSV schema and per-cycle score dumps.

use std::io::{Read, Write};
use std::path::Path;

use fairal::{AcquisitionScore, CycleRecord, FairnessReport, GroupId, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::config::Composition;
use crate::error::{CliError, CliResult};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

pub const RESULTS_COLUMNS: [&str; 16] = [
    "run_id",
    "bias_preset",
    "composition",
    "strategy",
    "seed",
    "cycle",
    "n_labeled",
    "dsc_overall",
    "dsc_g1",
    "dsc_g2",
    "delta",
    "essp",
    "group1_ratio",
    "weights_g1",
    "weights_g2",
    "eval_split",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Test,
    Labeled,
}

/// One results row. Floats are written in shortest round-trip form, so they
/// read back bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub bias_preset: String,
    pub composition: String,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub cycle: usize,
    pub n_labeled: usize,
    pub dsc_overall: f64,
    pub dsc_g1: f64,
    pub dsc_g2: f64,
    pub delta: f64,
    pub essp: f64,
    pub group1_ratio: f64,
    pub weights_g1: Option<f64>,
    pub weights_g2: Option<f64>,
    pub eval_split: EvalSplit,
}

pub fn run_id(preset: &str, composition: Composition, strategy: StrategyKind, seed: u64) -> String {
    format!("{preset}_{}_{}_s{seed}", composition.slug(), strategy)
}

fn group_dice(report: &FairnessReport, g: GroupId) -> f64 {
    report.group_dice(g).unwrap_or(f64::NAN)
}

impl ResultRow {
    pub fn from_record(
        run_id: &str,
        preset: &str,
        composition: Composition,
        strategy: StrategyKind,
        seed: u64,
        rec: &CycleRecord,
        split: EvalSplit,
    ) -> Self {
        let report = match split {
            EvalSplit::Test => &rec.test_report,
            EvalSplit::Labeled => &rec.labeled_report,
        };
        let w = |g| rec.weights.as_ref().and_then(|t| t.weight(g));
        Self {
            run_id: run_id.to_string(),
            bias_preset: preset.to_string(),
            composition: composition.to_string(),
            strategy,
            seed,
            cycle: rec.cycle,
            n_labeled: rec.n_labeled,
            dsc_overall: report.overall_dice,
            dsc_g1: group_dice(report, GroupId::G1),
            dsc_g2: group_dice(report, GroupId::G2),
            delta: report.delta,
            essp: report.essp,
            group1_ratio: rec.group1_ratio,
            weights_g1: w(GroupId::G1),
            weights_g2: w(GroupId::G2),
            eval_split: split,
        }
    }
}

pub fn write_rows<W: Write>(w: W, rows: &[ResultRow]) -> CliResult<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(RESULTS_COLUMNS)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a results CSV, checking the header against the fixed schema.
pub fn read_rows<R: Read>(r: R) -> CliResult<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("unreadable header: {e}")))?;
    if !header.is_empty() && header.iter().ne(RESULTS_COLUMNS) {
        return Err(CliError::Data(format!(
            "unexpected columns {:?}; expected {:?}",
            header.iter().collect::<Vec<_>>(),
            RESULTS_COLUMNS
        )));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CliError::Data(format!("row {}: {e}", i + 1))))
        .collect()
}

pub fn read_rows_from(path: &Path) -> CliResult<Vec<ResultRow>> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    read_rows(std::io::BufReader::new(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub case_id: u32,
    pub group: String,
    pub strategy: StrategyKind,
    pub raw_entropy: f64,
    pub region_size: usize,
    pub weight_applied: f64,
    pub score: f64,
    pub fallback_used: bool,
}

impl From<&AcquisitionScore> for ScoreRow {
    fn from(s: &AcquisitionScore) -> Self {
        Self {
            case_id: s.case_id.0,
            group: s.group.to_string(),
            strategy: s.strategy,
            raw_entropy: s.raw_entropy,
            region_size: s.region_size,
            weight_applied: s.weight_applied,
            score: s.score,
            fallback_used: s.fallback_used,
        }
    }
}

pub fn write_scores(path: &Path, scores: &[AcquisitionScore]) -> CliResult<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for s in scores {
        wtr.serialize(ScoreRow::from(s))?;
    }
    wtr.flush()?;
    Ok(())
}
