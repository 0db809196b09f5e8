use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mo_ensemble::combiner::FeedbackMode;
use mo_ensemble::experiment::{report_from_metrics, run_experiment, RunConfig};
use mo_ensemble::rng::derive_seed;
use mo_ensemble::synthetic::{generate_synthetic, SyntheticKind};
use mo_ensemble::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Dynamic multi-output ensembles for multi-step forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate the ensemble methods on a long-format CSV of series.
    Run {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Flat key = value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated method names, e.g. `Simple,Window_IH,ADE_CH`.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        feedback: Option<FeedbackMode>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write synthetic series as series_id,timestamp,value rows.
    Synth {
        #[arg(long)]
        spec: SyntheticKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of series; each gets its own derived seed.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the analysis reports from an existing metrics.csv.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn synth(spec: SyntheticKind, n: usize, seed: u64, count: usize, out: &PathBuf) -> Result<()> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["series_id", "timestamp", "value"])?;
    for i in 0..count {
        let (id, s) = if count == 1 {
            (format!("{spec}_{seed}"), seed)
        } else {
            (format!("{spec}_{i:03}"), derive_seed(seed, &format!("synth/{i}")))
        };
        let series = generate_synthetic(spec, id, n, s)?;
        for (t, v) in series.values().iter().enumerate() {
            w.write_record([series.id(), &t.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            data,
            config,
            out,
            seed,
            methods,
            feedback,
            threads,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::from_file(&p)?,
                None => RunConfig::default(),
            };
            if let Some(d) = data {
                cfg.data = Some(d);
            }
            if let Some(o) = out {
                cfg.out = Some(o);
            }
            if let Some(s) = seed {
                cfg.set("seed", &s.to_string())?;
            }
            if let Some(m) = methods {
                cfg.set("methods", &m)?;
            }
            if let Some(f) = feedback {
                cfg.set_feedback(f);
            }
            if let Some(t) = threads {
                cfg.threads = Some(t);
            }
            cfg.finalize()?;
            let outcome = run_experiment(&cfg)?;
            let meta = &outcome.meta;
            eprintln!(
                "evaluated {}/{} series, {} metric records",
                meta.series_evaluated,
                meta.series_total,
                outcome.table.len()
            );
            if let Some(report) = &meta.report {
                for r in report.ranks.iter().filter(|r| r.scope == mo_ensemble::evaluation::RankScope::SeriesFold).take(5) {
                    eprintln!("  {:<16} mean rank {:.2}", r.method, r.mean_rank);
                }
            }
            Ok(())
        }
        Command::Synth {
            spec,
            n,
            seed,
            count,
            out,
        } => synth(spec, n, seed, count, &out),
        Command::Report { metrics, out } => {
            let summary = report_from_metrics(&metrics, &out)?;
            eprintln!("wrote reports for {} method rank rows", summary.ranks.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::NoResults(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
