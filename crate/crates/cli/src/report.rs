//! Seed-averaged curves and final-cycle summary from a results CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fairal::StrategyKind;

use crate::error::{CliError, CliResult};
use crate::results::{EvalSplit, ResultRow};

pub const SUMMARY_FILE: &str = "summary.tsv";

/// Metrics emitted as curves, keyed by their results column name.
pub const CURVE_METRICS: [&str; 6] = ["essp", "delta", "dsc_overall", "dsc_g1", "dsc_g2", "group1_ratio"];

fn metric(row: &ResultRow, name: &str) -> f64 {
    match name {
        "essp" => row.essp,
        "delta" => row.delta,
        "dsc_overall" => row.dsc_overall,
        "dsc_g1" => row.dsc_g1,
        "dsc_g2" => row.dsc_g2,
        "group1_ratio" => row.group1_ratio,
        other => unreachable!("unknown metric {other}"),
    }
}

/// Percentage by which `weighted` undercuts `baseline`; `None` when the baseline is zero.
pub fn delta_reduction_percent(weighted: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (1.0 - weighted / baseline))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub bias_preset: String,
    pub composition: String,
    pub metric: &'static str,
    pub strategies: Vec<StrategyKind>,
    /// n_labeled and one seed-mean per strategy (`None` where a strategy has no row).
    pub points: Vec<(usize, Vec<Option<f64>>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalSummary {
    pub bias_preset: String,
    pub composition: String,
    pub strategy: StrategyKind,
    pub n_runs: usize,
    pub n_labeled: f64,
    pub essp: f64,
    pub delta: f64,
    pub dsc_overall: f64,
    pub group1_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaReduction {
    pub bias_preset: String,
    pub composition: String,
    pub delta_weighted: f64,
    pub delta_mean_entropy: f64,
    pub reduction_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub curves: Vec<Curve>,
    pub finals: Vec<FinalSummary>,
    pub reductions: Vec<DeltaReduction>,
}

type Cell = (String, String);

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pure function of the rows; only test-split rows are used.
pub fn build_report(rows: &[ResultRow]) -> CliResult<Report> {
    let rows: Vec<&ResultRow> = rows.iter().filter(|r| r.eval_split == EvalSplit::Test).collect();
    if rows.is_empty() {
        return Err(CliError::NoData("results (no test-split rows)".into()));
    }
    let mut by_cell: BTreeMap<Cell, Vec<&ResultRow>> = BTreeMap::new();
    for r in &rows {
        by_cell
            .entry((r.bias_preset.clone(), r.composition.clone()))
            .or_default()
            .push(r);
    }

    let mut curves = Vec::new();
    let mut finals = Vec::new();
    let mut reductions = Vec::new();
    for ((preset, comp), cell_rows) in &by_cell {
        let mut strategies: Vec<StrategyKind> = cell_rows.iter().map(|r| r.strategy).collect();
        strategies.sort();
        strategies.dedup();
        let mut n_values: Vec<usize> = cell_rows.iter().map(|r| r.n_labeled).collect();
        n_values.sort_unstable();
        n_values.dedup();

        for m in CURVE_METRICS {
            let mut acc: BTreeMap<(usize, StrategyKind), Vec<f64>> = BTreeMap::new();
            for r in cell_rows {
                acc.entry((r.n_labeled, r.strategy)).or_default().push(metric(r, m));
            }
            let points = n_values
                .iter()
                .map(|&n| {
                    (
                        n,
                        strategies.iter().map(|&s| acc.get(&(n, s)).map(|v| mean(v))).collect(),
                    )
                })
                .collect();
            curves.push(Curve {
                bias_preset: preset.clone(),
                composition: comp.clone(),
                metric: m,
                strategies: strategies.clone(),
                points,
            });
        }

        for &s in &strategies {
            let mut last: BTreeMap<&str, &ResultRow> = BTreeMap::new();
            for r in cell_rows.iter().filter(|r| r.strategy == s) {
                let e = last.entry(r.run_id.as_str()).or_insert(r);
                if r.cycle > e.cycle {
                    *e = r;
                }
            }
            let lasts: Vec<&ResultRow> = last.into_values().collect();
            let avg = |f: fn(&ResultRow) -> f64| mean(&lasts.iter().map(|r| f(r)).collect::<Vec<_>>());
            finals.push(FinalSummary {
                bias_preset: preset.clone(),
                composition: comp.clone(),
                strategy: s,
                n_runs: lasts.len(),
                n_labeled: avg(|r| r.n_labeled as f64),
                essp: avg(|r| r.essp),
                delta: avg(|r| r.delta),
                dsc_overall: avg(|r| r.dsc_overall),
                group1_ratio: avg(|r| r.group1_ratio),
            });
        }

        let final_delta = |s: StrategyKind| {
            finals
                .iter()
                .find(|f| &f.bias_preset == preset && &f.composition == comp && f.strategy == s)
                .map(|f| f.delta)
        };
        if let (Some(w), Some(e)) = (
            final_delta(StrategyKind::WeightedLocalizedEntropy),
            final_delta(StrategyKind::MeanEntropy),
        ) {
            reductions.push(DeltaReduction {
                bias_preset: preset.clone(),
                composition: comp.clone(),
                delta_weighted: w,
                delta_mean_entropy: e,
                reduction_percent: delta_reduction_percent(w, e),
            });
        }
    }
    Ok(Report {
        curves,
        finals,
        reductions,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Curve {
    pub fn file_name(&self) -> String {
        format!(
            "curve_{}_{}_{}.tsv",
            self.bias_preset,
            self.composition.replace('/', "-"),
            self.metric
        )
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("n_labeled");
        for k in &self.strategies {
            let _ = write!(s, "\t{k}");
        }
        s.push('\n');
        for (n, vals) in &self.points {
            let _ = write!(s, "{n}");
            for v in vals {
                let _ = write!(s, "\t{}", fmt_opt(*v));
            }
            s.push('\n');
        }
        s
    }
}

impl Report {
    pub fn summary_tsv(&self) -> String {
        let mut s = String::from(
            "bias_preset\tcomposition\tstrategy\tn_runs\tn_labeled\tessp\tdelta\tdsc_overall\tgroup1_ratio\tdelta_reduction_vs_mean_entropy_pct\n",
        );
        for f in &self.finals {
            let red = if f.strategy == StrategyKind::WeightedLocalizedEntropy {
                self.reductions
                    .iter()
                    .find(|r| r.bias_preset == f.bias_preset && r.composition == f.composition)
                    .and_then(|r| r.reduction_percent)
            } else {
                None
            };
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                f.bias_preset,
                f.composition,
                f.strategy,
                f.n_runs,
                f.n_labeled,
                f.essp,
                f.delta,
                f.dsc_overall,
                f.group1_ratio,
                fmt_opt(red)
            );
        }
        s
    }

    /// Rounded table for the terminal.
    pub fn human_summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:<7} {:<28} {:>4} {:>7} {:>7} {:>7} {:>8}",
            "preset", "comp", "strategy", "runs", "ESSP", "delta", "DSC", "G1 ratio"
        );
        for f in &self.finals {
            let _ = writeln!(
                s,
                "{:<8} {:<7} {:<28} {:>4} {:>7.4} {:>7.4} {:>7.4} {:>8.3}",
                f.bias_preset,
                f.composition,
                f.strategy.as_str(),
                f.n_runs,
                f.essp,
                f.delta,
                f.dsc_overall,
                f.group1_ratio
            );
        }
        for r in &self.reductions {
            let pct = r.reduction_percent.map_or("n/a".to_string(), |p| format!("{p:.1}%"));
            let _ = writeln!(
                s,
                "{} {}: final delta weighted {:.4} vs mean entropy {:.4}, reduction {pct}",
                r.bias_preset, r.composition, r.delta_weighted, r.delta_mean_entropy
            );
        }
        s
    }

    /// Writes curve files and the summary; returns the paths written.
    pub fn write(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for c in &self.curves {
            let p = dir.join(c.file_name());
            fs::write(&p, c.to_tsv())?;
            written.push(p);
        }
        let p = dir.join(SUMMARY_FILE);
        fs::write(&p, self.summary_tsv())?;
        written.push(p);
        Ok(written)
    }
}
