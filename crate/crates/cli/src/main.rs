use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairal_cli::config::parse_seeds;
use fairal_cli::{cmd_baseline, cmd_generate, cmd_report, cmd_run, CliError, CliResult, Config, RunOptions};

#[derive(Parser)]
#[command(
    name = "fairal",
    version,
    about = "Fairness-aware active learning experiments on synthetic cohorts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; every field is optional.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic cohort as FVOL1 volumes plus a manifest.
    Generate(Common),
    /// Train pooled, group-1-only and group-2-only models and score them on the test split.
    Baseline(Common),
    /// Run every (composition, strategy, seed) cell of the grid.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seeds to run, e.g. `0..10` or `1,4,7` (overrides the config).
        #[arg(long)]
        seeds: Option<String>,
        /// Worker threads; FAIRAL_JOBS takes precedence when set.
        #[arg(long, short)]
        jobs: Option<usize>,
        /// Write every cycle's acquisition scores under `scores/`.
        #[arg(long)]
        dump_scores: bool,
    },
    /// Seed-averaged curves and a final-cycle summary from a results CSV.
    Report {
        /// Results CSV written by `run`.
        results: PathBuf,
        /// Directory for curve files (default: next to the CSV).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn jobs_override(flag: Option<usize>) -> CliResult<Option<usize>> {
    match std::env::var("FAIRAL_JOBS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("FAIRAL_JOBS=`{v}` is not a positive integer"))),
        },
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = Config::load_or_default(c.config.as_deref())?;
            let (dir, m) = cmd_generate(&cfg, c.out.as_deref())?;
            println!("{} cases written to {}", m.cases.len(), dir.display());
        }
        Command::Baseline(c) => {
            let cfg = Config::load_or_default(c.config.as_deref())?;
            let rows = cmd_baseline(&cfg, c.out.as_deref())?;
            println!(
                "{:<12} {:>7} {:>7} {:>7} {:>7} {:>7}",
                "model", "DSC", "G1", "G2", "delta", "ESSP"
            );
            for r in rows {
                println!(
                    "{:<12} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
                    r.model, r.dsc_overall, r.dsc_g1, r.dsc_g2, r.delta, r.essp
                );
            }
        }
        Command::Run {
            common,
            seeds,
            jobs,
            dump_scores,
        } => {
            let cfg = Config::load_or_default(common.config.as_deref())?;
            let opts = RunOptions {
                out: common.out,
                seeds: seeds.as_deref().map(parse_seeds).transpose()?,
                jobs: jobs_override(jobs)?,
                dump_scores,
            };
            let outcome = cmd_run(&cfg, &opts)?;
            println!("{} rows written to {}", outcome.rows.len(), outcome.out_dir.display());
        }
        Command::Report { results, out } => {
            let out = out.unwrap_or_else(|| {
                results
                    .parent()
                    .map(|p| p.join("report"))
                    .unwrap_or_else(|| "report".into())
            });
            let rep = cmd_report(&results, &out)?;
            print!("{}", rep.human_summary());
            println!("curves written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
