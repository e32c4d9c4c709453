//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL` line.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use fairal::acquisition::{compute_group_weights, score_candidates, select_batch, Candidate, ScoringParams};
use fairal::active::{init_pool, ActiveLearner};
use fairal::metrics::{fairness_report, CaseScore};
use fairal::surrogate::{generate_cohort, BiasPreset, CohortConfig, SegmenterParams, TrainingSet};
use fairal::volume::bernoulli_entropy;
use fairal::{CaseId, FairnessReport, GroupId, GroupWeightTable, ProbabilityVolume, StrategyKind, VolumeShape};
use fairal_cli::commands::{split_cohort, RESULTS_FILE};
use fairal_cli::results::EvalSplit;
use fairal_cli::{cmd_baseline, cmd_generate, cmd_run, Composition, Config, ResultRow, RunOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Written to the stdout handle directly so the line shows even when test output is captured.
fn verdict(n: u32, pass: bool, detail: String) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn config(dir: &Path, toml: &str) -> Config {
    let path = dir.join("fairal.toml");
    std::fs::write(&path, toml).unwrap();
    Config::load(&path).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_1_formula_fidelity() {
    let scores: Vec<_> = (0..30)
        .map(|i| {
            let (g, d) = if i < 15 {
                (GroupId::G1, 0.75)
            } else {
                (GroupId::G2, 0.93)
            };
            CaseScore::new(CaseId(i), g, d).unwrap()
        })
        .collect();
    let r: FairnessReport = fairness_report(&scores).unwrap();
    let pass = (r.overall_dice - 0.84).abs() < 1e-9
        && (r.delta - 0.18).abs() < 1e-9
        && (r.essp - 0.7119).abs() <= 0.005
        && (r.essp - 0.84 / 1.18).abs() < 1e-12;
    verdict(
        1,
        pass,
        format!("overall {:.4} delta {:.4} essp {:.4}", r.overall_dice, r.delta, r.essp),
    );
}

#[test]
fn criterion_2_entropy() {
    let ln2 = std::f64::consts::LN_2;
    let h_half = bernoulli_entropy(0.5f64);
    let ends = bernoulli_entropy(0.0f64) == 0.0 && bernoulli_entropy(1.0f64) == 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p: f64 = rng.gen();
        worst = worst.max((bernoulli_entropy(p) - bernoulli_entropy(1.0 - p)).abs());
    }
    let pass = (h_half - ln2).abs() <= 1e-12 && ends && worst <= 1e-12;
    verdict(
        2,
        pass,
        format!(
            "H(0.5)-ln2 {:.1e} endpoints zero {ends} max asymmetry {worst:.1e}",
            h_half - ln2
        ),
    );
}

/// Smooth random probability field with a bright blob so the thresholded mask is non-empty.
fn random_probs(rng: &mut ChaCha8Rng, shape: VolumeShape) -> ProbabilityVolume {
    let n = shape.nx() as f64;
    let c: [f64; 3] = [
        rng.gen_range(2.0..n - 2.0),
        rng.gen_range(2.0..n - 2.0),
        rng.gen_range(2.0..n - 2.0),
    ];
    let r = rng.gen_range(1.0..3.0);
    let data = (0..shape.len())
        .map(|i| {
            let (x, y, z) = shape.coords(i);
            let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2);
            let base = (-d2 / (2.0 * r * r)).exp();
            (base + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0)
        })
        .collect();
    ProbabilityVolume::new(shape, data).unwrap()
}

#[test]
fn criterion_3_weighting_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let groups = [GroupId::G1, GroupId::G2];
    let params = ScoringParams::default();
    let shape = VolumeShape::cube(8).unwrap();
    let (mut worst_sum, mut shift_ok, mut uniform_ok, mut sigma0_ok) = (0.0f64, true, true, true);

    for trial in 0..40 {
        let dices: Vec<CaseScore<f64>> = (0..rng.gen_range(2..12))
            .map(|i| CaseScore::new(CaseId(i), groups[i as usize % 2], rng.gen()).unwrap())
            .collect();
        let table = compute_group_weights(&dices, &groups).unwrap();
        worst_sum = worst_sum.max((table.entries().iter().map(|e| e.weight).sum::<f64>() - 1.0).abs());

        let z: Vec<f64> = groups.iter().map(|&g| table.z(g).unwrap()).collect();
        let shift = rng.gen_range(-25.0..25.0);
        let shifted = GroupWeightTable::from_z(&groups, &z.iter().map(|v| v + shift).collect::<Vec<_>>()).unwrap();
        worst_sum = worst_sum.max((shifted.entries().iter().map(|e| e.weight).sum::<f64>() - 1.0).abs());

        let probs: Vec<ProbabilityVolume> = (0..20).map(|_| random_probs(&mut rng, shape)).collect();
        let pool: Vec<Candidate<'_, f64>> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| Candidate {
                case_id: CaseId(i as u32),
                group: groups[(i + trial) % 2],
                probs: p,
            })
            .collect();
        let b = rng.gen_range(1..=pool.len());
        let weighted = |t: &GroupWeightTable| {
            let s = score_candidates(StrategyKind::WeightedLocalizedEntropy, &pool, Some(t), params, 0).unwrap();
            select_batch(&s, b).unwrap()
        };
        shift_ok &= weighted(&table) == weighted(&shifted);

        let uniform = GroupWeightTable::uniform(&groups).unwrap();
        let s_w = score_candidates(StrategyKind::WeightedLocalizedEntropy, &pool, Some(&uniform), params, 0).unwrap();
        let s_l = score_candidates(StrategyKind::LocalizedEntropy, &pool, None, params, 0).unwrap();
        uniform_ok &= select_batch(&s_w, pool.len()).unwrap() == select_batch(&s_l, pool.len()).unwrap();

        let d = rng.gen::<f64>();
        let flat: Vec<CaseScore<f64>> = (0..6)
            .map(|i| CaseScore::new(CaseId(i), groups[i as usize % 2], d).unwrap())
            .collect();
        let t0 = compute_group_weights(&flat, &groups).unwrap();
        sigma0_ok &= t0
            .entries()
            .iter()
            .all(|e| e.z == 0.0 && (e.weight - 0.5).abs() < 1e-15);
    }
    let pass = worst_sum <= 1e-9 && shift_ok && uniform_ok && sigma0_ok;
    verdict(
        3,
        pass,
        format!("max |sum-1| {worst_sum:.1e} shift-invariant {shift_ok} uniform ranking {uniform_ok} sigma0 uniform {sigma0_ok}"),
    );
}

#[test]
fn criterion_4_gradient_check() {
    let cfg = CohortConfig {
        shape: VolumeShape::cube(16).unwrap(),
        ..CohortConfig::preset(BiasPreset::Strong, 2, 4)
    };
    let cases: Vec<fairal::Case> = generate_cohort(&cfg).unwrap();
    let refs: Vec<&fairal::Case> = cases.iter().collect();
    let set = TrainingSet::build(&refs, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let l2 = rng.gen_range(1e-4..1e-1);
        let mut p = SegmenterParams::zero();
        for w in &mut p.weights {
            *w = rng.gen_range(-1.5..1.5);
        }
        let g = set.gradient(&p, l2);
        for (j, &gj) in g.iter().enumerate() {
            let (mut plus, mut minus) = (p, p);
            plus.weights[j] += h;
            minus.weights[j] -= h;
            let fd = (set.loss(&plus, l2) - set.loss(&minus, l2)) / (2.0 * h);
            worst = worst.max((gj - fd).abs() / gj.abs().max(fd.abs()).max(1e-8));
        }
    }
    verdict(4, worst < 1e-4, format!("max relative error {worst:.2e} over 5 points"));
}

const FULL: &str = r#"
[cohort]
preset = "strong"
n_per_group = 55
seed = SEED

[split]
test_per_group = 15

[active_learning]
n_initial = 10
batch_size = 4
n_cycles = 5

[grid]
compositions = ["50/50"]
seeds = [RUN]
"#;

fn full_config(dir: &Path, cohort_seed: u64, run_seed: u64) -> Config {
    config(
        dir,
        &FULL
            .replace("SEED", &cohort_seed.to_string())
            .replace("RUN", &run_seed.to_string()),
    )
}

#[test]
fn criterion_5_baseline_bias() {
    let mut ok = 0;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = full_config(tmp.path(), seed, 0);
        cmd_generate(&cfg, None).unwrap();
        let rows = cmd_baseline(&cfg, None).unwrap();
        let by: BTreeMap<&str, _> = rows.iter().map(|r| (r.model.as_str(), r)).collect();
        let g2 = by["group2_only"];
        let gap = g2.dsc_g2 - g2.dsc_g1;
        let largest = g2.delta > by["pooled"].delta && g2.delta > by["group1_only"].delta;
        if gap > 0.03 && largest {
            ok += 1;
        }
        lines.push(format!(
            "seed {seed}: g2-only G1 {:.3} G2 {:.3} delta {:.3} (pooled {:.3}, g1-only {:.3})",
            g2.dsc_g1, g2.dsc_g2, g2.delta, by["pooled"].delta, by["group1_only"].delta
        ));
    }
    for l in &lines {
        println!("  {l}");
    }
    verdict(5, ok >= 4, format!("{ok}/5 cohort seeds show the bias"));
}

const AL_SEEDS: u64 = 20;

/// Final-cycle test rows of every strategy for each seed, cohort and run seed varied together.
fn final_rows() -> &'static Vec<BTreeMap<StrategyKind, ResultRow>> {
    static ROWS: OnceLock<Vec<BTreeMap<StrategyKind, ResultRow>>> = OnceLock::new();
    ROWS.get_or_init(|| {
        (0..AL_SEEDS)
            .map(|seed| {
                let tmp = tempfile::tempdir().unwrap();
                let cfg = full_config(tmp.path(), 100 + seed, seed);
                cmd_generate(&cfg, None).unwrap();
                let out = cmd_run(&cfg, &RunOptions::default()).unwrap();
                let last = out.rows.iter().map(|r| r.cycle).max().unwrap();
                out.rows
                    .into_iter()
                    .filter(|r| r.cycle == last && r.eval_split == EvalSplit::Test)
                    .map(|r| (r.strategy, r))
                    .collect()
            })
            .collect()
    })
}

fn strategy_means(f: fn(&ResultRow) -> f64) -> BTreeMap<StrategyKind, f64> {
    StrategyKind::ALL
        .iter()
        .map(|&k| (k, mean(&final_rows().iter().map(|m| f(&m[&k])).collect::<Vec<_>>())))
        .collect()
}

#[test]
fn criterion_6_fairness_dynamics() {
    let delta = strategy_means(|r| r.delta);
    let essp = strategy_means(|r| r.essp);
    for k in StrategyKind::ALL {
        println!("  {k}: mean final delta {:.4} essp {:.4}", delta[&k], essp[&k]);
    }
    let w = StrategyKind::WeightedLocalizedEntropy;
    let lower_delta = delta[&w] < delta[&StrategyKind::MeanEntropy];
    let best_essp = StrategyKind::ALL.iter().all(|k| essp[&w] >= essp[k]);
    verdict(
        6,
        lower_delta && best_essp,
        format!(
            "weighted delta {:.4} vs mean-entropy {:.4}; weighted essp highest {best_essp} over {AL_SEEDS} seeds",
            delta[&w],
            delta[&StrategyKind::MeanEntropy]
        ),
    );
}

#[test]
fn criterion_7_selection_dynamics() {
    let ratios = |k| final_rows().iter().map(|m| m[&k].group1_ratio).collect::<Vec<_>>();
    let w = ratios(StrategyKind::WeightedLocalizedEntropy);
    let r = ratios(StrategyKind::Random);
    let diffs: Vec<f64> = w.iter().zip(&r).map(|(a, b)| a - b).collect();
    let n = diffs.len() as f64;
    let md = mean(&diffs);
    let sd = (diffs.iter().map(|d| (d - md).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = md / (sd / n.sqrt());
    let p = 1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t);
    let (mw, mr) = (mean(&w), mean(&r));
    let pass = mw > 0.5 && p < 0.05 && (mr - 0.5).abs() <= 0.1;
    verdict(
        7,
        pass,
        format!("weighted ratio {mw:.3} random {mr:.3}; paired one-sided t {t:.2} p {p:.1e}"),
    );
}

const GRID: &str = r#"
[cohort]
n_per_group = 12
shape = [16, 16, 16]
seed = 8

[split]
test_per_group = 4

[active_learning]
n_initial = 6
batch_size = 2
n_cycles = 3

[grid]
compositions = ["50/50", "80/20"]
seeds = [0, 1]
"#;

#[test]
fn criterion_8_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), GRID);
    cmd_generate(&cfg, None).unwrap();
    let run = |name: &str, jobs| {
        let opts = RunOptions {
            out: Some(tmp.path().join(name)),
            jobs: Some(jobs),
            dump_scores: true,
            ..RunOptions::default()
        };
        let out = cmd_run(&cfg, &opts).unwrap();
        (
            std::fs::read(out.out_dir.join(RESULTS_FILE)).unwrap(),
            out.manifest.outputs,
        )
    };
    let (a, da) = run("a", 4);
    let (b, db) = run("b", 4);
    let rows = a.iter().filter(|&&c| c == b'\n').count() - 1;
    let pass = a == b && da == db && rows == 2 * 4 * 2 * 4;
    verdict(
        8,
        pass,
        format!(
            "{rows} rows, results and score dumps byte-identical {}",
            a == b && da == db
        ),
    );
}

#[test]
fn criterion_9_cycle_zero_equality() {
    let cohort_cfg = CohortConfig::preset(BiasPreset::Strong, 55, 9);
    let split = split_cohort(generate_cohort(&cohort_cfg).unwrap(), 15).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    let reports: Vec<_> = StrategyKind::ALL
        .iter()
        .map(|&k| {
            let al = cfg.al_config(Composition::new(50), k, 3);
            let state = init_pool(&split.pool, &al).unwrap();
            let learner = ActiveLearner::new(state, &split.pool, &al, &split.test).unwrap();
            learner.snapshot().unwrap().test_report
        })
        .collect();
    let same = reports.windows(2).all(|w| w[0] == w[1]);
    verdict(
        9,
        same,
        format!(
            "cycle-0 test report identical across {} strategies (essp {:.4})",
            reports.len(),
            reports[0].essp
        ),
    );
}
