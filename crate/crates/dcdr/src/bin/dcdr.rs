//! Command-line front end: baseline evaluation, single optimized runs,
//! config-driven sweeps, and solution verification.
//!
//! Exit codes: 0 success, 2 config error, 3 infeasible program,
//! 4 solver non-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcdr::harness::{
    export_report, run_experiment, ExperimentConfig, ExperimentReport, RunOutcome,
};
use dcdr::model::baseline_cost;
use dcdr::optimizer::{solve, verify_solution, Mode, SolveOptions};
use dcdr::Error;

#[derive(Parser)]
#[command(name = "dcdr", about = "Data-center demand response optimizer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the request-trace path from the config.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Override the wind-trace path from the config.
    #[arg(long)]
    wind: Option<PathBuf>,
    /// Override the solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the no-response baseline cost.
    Baseline(Common),
    /// Solve one (mode, D) cell and print the outcome.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Program mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        /// Maximum deferral in slots.
        #[arg(long)]
        dmax: Option<usize>,
    },
    /// Run the full sweep from the config and export the report.
    Sweep(Common),
    /// Solve one cell and print the constraint-residual audit.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        dmax: Option<usize>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(trace) = &common.trace {
        config.demand.trace = Some(trace.clone());
        config.demand.synthetic = None;
    }
    if let Some(wind) = &common.wind {
        match &mut config.renewable {
            Some(section) => section.wind_trace = wind.clone(),
            None => {
                return Err(Error::Config(
                    "--wind given but the config has no [renewable] section".into(),
                ))
            }
        }
    }
    if let Some(tol) = common.tol {
        config.experiment.tolerance = tol;
    }
    if let Some(seed) = common.seed {
        config.experiment.seed = seed;
    }
    if let Some(out) = &common.out {
        config.experiment.output = Some(out.clone());
    }
    Ok(config)
}

fn cmd_baseline(common: &Common) -> Result<(), Error> {
    let config = load_config(common)?;
    let (billing, fleet, demand) = config.models()?;
    let cost = baseline_cost(&demand, &fleet, &billing)?;
    let peak = dcdr::model::power_profile(&demand.requests, &fleet)?.peak();
    println!("baseline over {} slots:", billing.tau());
    println!("  energy   {:>14.4} $", cost.energy);
    for (j, d) in cost.demand.iter().enumerate() {
        println!("  demand {j} {d:>14.4} $");
    }
    println!("  total    {:>14.4} $", cost.total());
    println!("  peak     {peak:>14.4} KW");
    Ok(())
}

fn cell(config: &ExperimentConfig, mode: Option<Mode>, dmax: Option<usize>) -> (Mode, usize) {
    let mode = mode.unwrap_or_else(|| config.experiment.modes[0]);
    let dmax = dmax.unwrap_or_else(|| *config.experiment.d_values.iter().max().unwrap());
    (mode, dmax)
}

fn cmd_optimize(common: &Common, mode: Option<Mode>, dmax: Option<usize>) -> Result<(), Error> {
    let config = load_config(common)?;
    let (mode, dmax) = cell(&config, mode, dmax);
    let program = config.build_program(mode, dmax)?;
    let options = SolveOptions::with_tolerance(config.experiment.tolerance);
    let solution = solve(&program, &options)?;
    let baseline = program.baseline().total();
    let peak = program.billed_peak_kw(&solution.schedule, solution.shutdown.as_ref())?;
    println!(
        "{mode} D={dmax}: solved in {} iterations ({:.1} ms)",
        solution.diagnostics.iterations, solution.diagnostics.solve_time_ms
    );
    println!("  electricity {:>14.4} $", solution.cost.electricity());
    println!("  reward      {:>14.4} $", solution.cost.reward);
    if mode == Mode::Shutdown {
        println!("  wear        {:>14.4} $", solution.cost.wear);
    }
    println!("  total       {:>14.4} $ (baseline {:.4})", solution.cost.total(), baseline);
    println!("  billed peak {peak:>14.4} KW");
    println!("  deferred    {:>14.4} requests", solution.schedule.total_deferred());
    println!(
        "  profit delta {:>13.6} $",
        solution.cost.profit_delta()
    );
    if let Some(out) = &config.experiment.output {
        let report = single_run_report(&config, mode, dmax, &solution, peak)?;
        export_report(&report, out)?;
        println!("report written to {out:?}");
    }
    Ok(())
}

fn single_run_report(
    config: &ExperimentConfig,
    mode: Mode,
    d_max: usize,
    solution: &dcdr::optimizer::Solution,
    peak_kw: f64,
) -> Result<ExperimentReport, Error> {
    let (billing, fleet, demand) = config.models()?;
    let baseline = baseline_cost(&demand, &fleet, &billing)?;
    let baseline_peak = dcdr::model::power_profile(&demand.requests, &fleet)?.peak();
    Ok(ExperimentReport {
        baseline_peak_kw: baseline_peak,
        baseline_cost_usd: baseline.total(),
        runs: vec![dcdr::harness::RunRecord {
            mode,
            d_max,
            outcome: RunOutcome::Solved {
                peak_kw,
                cost_usd: solution.cost.total(),
                reward_usd: solution.cost.reward,
                wear_usd: solution.cost.wear,
                profit_delta_usd: solution.cost.profit_delta(),
                solve_ms: solution.diagnostics.solve_time_ms,
                iterations: solution.diagnostics.iterations,
            },
        }],
    })
}

fn cmd_sweep(common: &Common) -> Result<(), Error> {
    let config = load_config(common)?;
    let report = run_experiment(&config)?;
    let failed: Vec<&dcdr::harness::RunRecord> = report
        .runs
        .iter()
        .filter(|r| matches!(r.outcome, RunOutcome::Failed { .. }))
        .collect();
    println!(
        "sweep finished: {} runs, {} failed (baseline cost {:.4} $, peak {:.4} KW)",
        report.runs.len(),
        failed.len(),
        report.baseline_cost_usd,
        report.baseline_peak_kw
    );
    for r in &report.runs {
        match &r.outcome {
            RunOutcome::Solved {
                peak_kw, cost_usd, ..
            } => println!(
                "  {} D={}: cost {:.4} $ (x{:.4}), peak {:.4} KW (x{:.4})",
                r.mode,
                r.d_max,
                cost_usd,
                cost_usd / report.baseline_cost_usd,
                peak_kw,
                peak_kw / report.baseline_peak_kw
            ),
            RunOutcome::Failed { reason } => {
                println!("  {} D={}: FAILED ({reason})", r.mode, r.d_max)
            }
        }
    }
    if let Some(out) = &config.experiment.output {
        export_report(&report, out)?;
        println!("report written to {out:?}");
    }
    Ok(())
}

fn cmd_verify(common: &Common, mode: Option<Mode>, dmax: Option<usize>) -> Result<(), Error> {
    let config = load_config(common)?;
    let (mode, dmax) = cell(&config, mode, dmax);
    let program = config.build_program(mode, dmax)?;
    let options = SolveOptions::with_tolerance(config.experiment.tolerance);
    let solution = solve(&program, &options)?;
    let report = verify_solution(&solution, &program)?;
    println!("{report}");
    if report.passes(options.tolerance) {
        println!("PASS: residuals within {:.1e}", options.tolerance);
        Ok(())
    } else {
        Err(Error::NonConvergence {
            status: format!(
                "verification failed: max violation {:.3e}",
                report.max_violation()
            ),
            iterations: solution.diagnostics.iterations,
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } => 3,
        Error::NonConvergence { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Baseline(common) => cmd_baseline(common),
        Command::Optimize { common, mode, dmax } => cmd_optimize(common, *mode, *dmax),
        Command::Sweep(common) => cmd_sweep(common),
        Command::Verify { common, mode, dmax } => cmd_verify(common, *mode, *dmax),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
