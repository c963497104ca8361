use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use penalty_storm::harness::{self, ExperimentConfig, FitSeries, ScheduleReport};
use penalty_storm::Schedule;

#[derive(Parser)]
#[command(name = "penalty-storm", version, about = "Run and analyse constrained stochastic optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config; writes one CSV per seed and summary.jsonl.
    Run {
        config: PathBuf,
        /// Write into this directory instead of the config's `outdir`.
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Fit a log-log decay rate over trace CSVs matching a glob.
    Fit {
        pattern: String,
        /// Column or sum of powered columns, e.g. `cone_dist^2+feas^2`.
        #[arg(long)]
        column: String,
        #[arg(long)]
        kmin: u64,
        #[arg(long)]
        kmax: u64,
        /// Fit the column itself instead of its running average.
        #[arg(long)]
        raw: bool,
    },
    /// Check the configured schedule's defining inequalities / identities.
    ValidateSchedule {
        config: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        kmax: u64,
    },
    /// List built-in problems.
    ListProblems,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` means the command ran but reported a failure.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run { config, outdir } => {
            let mut cfg = ExperimentConfig::from_path(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(dir) = outdir {
                cfg.outdir = dir;
            }
            let out = harness::run_experiment(&cfg)?;
            for r in &out.reports {
                let sel = r
                    .selected
                    .as_ref()
                    .map(|s| format!("cone_dist={:.3e} feas={:.3e}", s.cone_dist, s.feas))
                    .unwrap_or_else(|| "n/a".into());
                match &r.aborted {
                    Some(msg) => println!("seed {}: ABORTED ({msg})", r.seed),
                    None => println!("seed {}: {} steps, selected k={} {sel}", r.seed, r.steps_taken, r.selected_index),
                }
            }
            println!("summary: {}", out.summary_path.display());
            Ok(!out.any_aborted())
        }
        Command::Fit {
            pattern,
            column,
            kmin,
            kmax,
            raw,
        } => {
            let mut files = Vec::new();
            for entry in glob::glob(&pattern).with_context(|| format!("bad glob {pattern:?}"))? {
                files.push(entry?);
            }
            if files.is_empty() {
                bail!("no files match {pattern:?}");
            }
            files.sort();
            let series = if raw { FitSeries::Raw } else { FitSeries::RunningAverage };
            let fit = harness::fit_rate(&files, &column, kmin, kmax, series)?;
            println!(
                "files={} points={} slope={:.6} intercept={:.6} r2={:.6}",
                files.len(),
                fit.points,
                fit.slope,
                fit.intercept,
                fit.r2
            );
            Ok(true)
        }
        Command::ValidateSchedule { config, kmax } => {
            let cfg = ExperimentConfig::from_path(&config).with_context(|| format!("loading {}", config.display()))?;
            let problem = cfg.problem.build()?;
            println!("constants: {}", serde_json::to_string(problem.constants())?);
            let report = harness::validate_schedule(&problem, &cfg, kmax)?;
            match &report {
                ScheduleReport::Alm { schedule, validation } => {
                    println!(
                        "alm schedule: c={:.6e} m={:.6e} rho={:.6e} k0={:.6e} eta_1={:.6e}",
                        schedule.c(),
                        schedule.m_const(),
                        schedule.rho(),
                        schedule.k0(),
                        schedule.eta(1)
                    );
                    for (i, ok) in validation.passed.iter().enumerate() {
                        println!("inequality {}: {}", i + 1, if *ok { "ok" } else { "VIOLATED" });
                    }
                    if let Some(v) = &validation.first_violation {
                        println!(
                            "first violation: inequality {} at k={} (lhs={:.6e} rhs={:.6e})",
                            v.inequality, v.k, v.lhs, v.rhs
                        );
                    }
                    println!("checked {} indices up to k={kmax}", validation.points_checked);
                }
                ScheduleReport::Penalty { schedule, identity_error } => {
                    let p = match schedule {
                        Schedule::Penalty(p) => *p,
                        Schedule::Dual(d) => *d.penalty(),
                        Schedule::Alm(_) => unreachable!("alm schedules report separately"),
                    };
                    println!(
                        "penalty schedule: regime={:?} rho_1={:.6e} l_tilde={:.6e} eta_1={:.6e}",
                        p.regime(),
                        p.rho(1),
                        p.l_tilde(),
                        p.eta(1)
                    );
                    println!("penalty schedule: max relative error of the step-size identity = {identity_error:.3e}");
                }
            }
            println!("{}", if report.ok() { "OK" } else { "FAILED" });
            Ok(report.ok())
        }
        Command::ListProblems => {
            for (name, desc) in harness::builtin_problems() {
                println!("{name:<14} {desc}");
            }
            Ok(true)
        }
    }
}
