//! Command-line interface: `run`, `audit`, and `sweep`.
//!
//! Exit codes: 0 on success, 1 on configuration or I/O errors, 2 when an
//! audit suite fails its criterion.

use crate::diagnostics::{
    run_condition_suite, run_descent_suite, run_drift_suite, run_rank_suite, SuiteOutcome,
};
use crate::error::Result;
use crate::harness::{run_experiment, sweep_t_inv, ExperimentConfig};
use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fedrco",
    version,
    about = "Deterministic federated-learning simulator with a robust second-order client optimizer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics.csv, events.csv, config.json.
        #[arg(long, default_value = "fedrco_out")]
        out: PathBuf,
    },
    /// Run the stability/convergence audit suites.
    Audit {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory whose audit_report.json receives one JSON line per
        /// report.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sweep one parameter over a list of values.
    Sweep {
        /// Parameter to sweep (only `t_inv` is supported).
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 20,50,200,500.
        #[arg(long, value_delimiter = ',')]
        values: Vec<u64>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "fedrco_out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Rank,
    Condition,
    Descent,
    Drift,
    All,
}

fn run_suites(suite: Suite, seed: u64) -> Result<Vec<SuiteOutcome>> {
    Ok(match suite {
        Suite::Rank => vec![run_rank_suite(seed)?],
        Suite::Condition => vec![run_condition_suite(seed)?],
        Suite::Descent => vec![run_descent_suite(seed)?],
        Suite::Drift => vec![run_drift_suite(seed)?],
        Suite::All => vec![
            run_rank_suite(seed)?,
            run_condition_suite(seed)?,
            run_descent_suite(seed)?,
            run_drift_suite(seed)?,
        ],
    })
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let artifacts = run_experiment(&cfg, Some(&out))?;
            let resets: usize = artifacts.metrics.iter().map(|m| m.hard_resets).sum();
            let inversions: usize = artifacts.metrics.iter().map(|m| m.inversions).sum();
            println!(
                "method={} rounds={} final_test_accuracy={:.4} hard_resets={} inversions={}",
                cfg.method.as_str(),
                artifacts.metrics.len(),
                artifacts.final_test_accuracy,
                resets,
                inversions
            );
            println!("metrics written to {}", out.join("metrics.csv").display());
            Ok(0)
        }
        Command::Audit { suite, seed, out } => {
            let outcomes = run_suites(suite, seed)?;
            std::fs::create_dir_all(&out)?;
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(out.join("audit_report.json"))?;
            let mut all_pass = true;
            for outcome in &outcomes {
                for report in &outcome.reports {
                    println!(
                        "[{}] {}: {} ({} violations / {} trials, worst margin {:.3e})",
                        outcome.suite,
                        report.name,
                        if report.pass { "pass" } else { "fail" },
                        report.violations,
                        report.trials,
                        report.worst_margin
                    );
                    writeln!(file, "{}", report.to_json_line())?;
                }
                writeln!(
                    file,
                    "{}",
                    serde_json::json!({"suite": outcome.suite, "pass": outcome.pass})
                )?;
                println!(
                    "suite {}: {}",
                    outcome.suite,
                    if outcome.pass { "PASS" } else { "FAIL" }
                );
                all_pass &= outcome.pass;
            }
            Ok(if all_pass { 0 } else { 2 })
        }
        Command::Sweep {
            param,
            values,
            config,
            seed,
            out,
        } => {
            if param != "t_inv" {
                return Err(crate::error::Error::config(
                    "sweep.param",
                    format!("unsupported parameter `{param}`; only `t_inv` can be swept"),
                ));
            }
            if values.is_empty() {
                return Err(crate::error::Error::config(
                    "sweep.values",
                    "no values given",
                ));
            }
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let results = sweep_t_inv(&cfg, &values, Some(&out))?;
            for r in &results {
                println!(
                    "t_inv={} final_test_accuracy={:.4} total_inversions={}",
                    r.value, r.final_test_accuracy, r.total_inversions
                );
            }
            println!(
                "sweep summary written to {}",
                out.join("sweep.csv").display()
            );
            Ok(0)
        }
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}
