use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fsc_harness::compare::{cmd_compare, CompareSpec};
use fsc_harness::eval::{cmd_eval, EvalSpec};
use fsc_harness::gradcheck::{cmd_gradcheck, GradcheckSpec};
use fsc_harness::io::{create_dir, write_json};
use fsc_harness::spec::{Algorithm, ExperimentSpec};
use fsc_harness::train::{cmd_train, TrainReport};

#[derive(Parser)]
#[command(name = "fsc", version, about = "Learn and evaluate finite-state controllers for POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a controller over several seeds and write learning curves.
    Train(Common),
    /// Train the tabular SARSA baseline (the config's algorithm is ignored).
    Sarsa(Common),
    /// Evaluate saved graphs with frozen weights.
    Eval(Common),
    /// Time exact and stochastic gradient ascent across discount factors.
    Compare(Common),
    /// Compare sampled weight changes with finite-difference gradients.
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_train(report: &TrainReport) {
    println!("{} on {}", report.algorithm.name(), report.environment);
    if let Some(v) = report.optimal_value {
        println!("fully observable optimum: {v:.6}");
    }
    for (k, r) in report.results.iter().enumerate() {
        let mark = if k == report.best { " *" } else { "" };
        println!(
            "alpha {:<12} final {:.4} +- {:.4} over {} runs -> {}{mark}",
            r.alpha,
            r.final_performance.mean,
            r.final_performance.std_err,
            r.runs.len(),
            r.dir.display()
        );
    }
}

fn train(args: &Common, force_sarsa: bool) -> Result<()> {
    let mut spec = ExperimentSpec::load(&args.config)?;
    if force_sarsa {
        spec.algorithm = Algorithm::Sarsa;
    }
    if let Some(seed) = args.seed {
        spec.learner.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.output = out.clone();
    }
    let report = cmd_train(&spec)?;
    print_train(&report);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train(&args, false),
        Command::Sarsa(args) => train(&args, true),
        Command::Eval(args) => {
            let mut spec = EvalSpec::load(&args.config)?;
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let report = cmd_eval(&spec)?;
            if let Some(out) = &args.out {
                create_dir(out)?;
                write_json(&out.join("eval.json"), &report)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Compare(args) => {
            let mut spec = CompareSpec::load(&args.config)?;
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            if let Some(out) = &args.out {
                spec.output = out.clone();
            }
            let report = cmd_compare(&spec)?;
            println!("ticks to {:.0}% of optimum ({:?} clock)", 100.0 * report.threshold, report.clock);
            println!("{:>8} {:>14} {:>10} {:>14} {:>10}", "gamma", "exact", "alpha", "stochastic", "alpha");
            let show = |t: Option<u64>| t.map_or_else(|| "censored".to_string(), |t| t.to_string());
            for r in &report.rows {
                println!(
                    "{:>8} {:>14} {:>10} {:>14} {:>10}",
                    r.gamma,
                    show(r.exact.median_ticks),
                    r.exact.alpha,
                    show(r.stochastic.median_ticks),
                    r.stochastic.alpha
                );
            }
            let ratio = |r: Option<f64>| r.map_or_else(|| "censored".to_string(), |r| format!("{r:.2}"));
            println!(
                "last/first: exact {} stochastic {}",
                ratio(report.exact_ratio),
                ratio(report.stochastic_ratio)
            );
            Ok(())
        }
        Command::Gradcheck(args) => {
            let mut spec = GradcheckSpec::load(&args.config)?;
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let report = cmd_gradcheck(&spec)?;
            if let Some(out) = &args.out {
                create_dir(out)?;
                write_json(&out.join("gradcheck.json"), &report)?;
            }
            println!("{:<28} {:>13} {:>13} {:>11} {:>7}", "weight", "sampled", "expected", "std err", "z");
            for r in &report.rows {
                println!(
                    "{:<28} {:>13.6e} {:>13.6e} {:>11.3e} {:>7.2}",
                    r.coord, r.sampled, r.expected, r.std_err, r.z
                );
            }
            println!("max |z| = {:.2} over {} trials", report.max_abs_z, report.trials);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).context("fsc failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
