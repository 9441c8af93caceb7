//! Conic solve and solution recovery.
//!
//! The assembled program is handed to an interior-point solver; the returned
//! point is then polished into an exactly conservative schedule: deferrals
//! are clamped non-negative, each arrival slot is rescaled to schedule its
//! demand exactly, and deferred volume is trimmed to the elastic volume so
//! the recovered reward always sits inside its band. Epigraph variables are
//! re-tightened when the objective is reported, so the recorded objective
//! agrees with direct formula evaluation to machine precision.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};
use crate::incentive::{optimal_reward, total_reward};
use crate::model::DeferralSchedule;
use crate::optimizer::program::ProgramSpec;
use crate::optimizer::{Mode, ShutdownPlan, Solution, SolveDiagnostics, SolveOptions};

/// Solves the program to the requested tolerance.
///
/// Deterministic: identical programs and options produce identical solutions.
pub fn solve(program: &ProgramSpec, options: &SolveOptions) -> Result<Solution> {
    if !options.tolerance.is_finite() || options.tolerance <= 0.0 {
        return Err(Error::InvalidParameter {
            what: "solve options",
            detail: format!("tolerance {} must be positive", options.tolerance),
        });
    }

    // With no admissible deferral and no free server decisions the program
    // has a single feasible point: serve everything on arrival.
    if program.active_slots.is_empty() && program.mode() != Mode::Shutdown {
        let schedule =
            DeferralSchedule::identity(&program.demand().requests, program.d_max())?;
        return finalize(
            program,
            schedule,
            None,
            SolveDiagnostics {
                status: "Solved".into(),
                ..SolveDiagnostics::default()
            },
        );
    }

    let blocks = &program.blocks;
    let n = program.variable_count();
    let a = CscMatrix::new_from_triplets(
        blocks.rhs.len(),
        n,
        blocks.rows.clone(),
        blocks.cols.clone(),
        blocks.vals.clone(),
    );
    let p = CscMatrix::spalloc((n, n), 0);
    let cones = [
        SupportedConeT::ZeroConeT(blocks.n_eq),
        SupportedConeT::NonnegativeConeT(blocks.n_ineq),
        SupportedConeT::SecondOrderConeT(blocks.soc_dim),
    ];
    let mut settings = DefaultSettings::default();
    settings.verbose = false;
    settings.max_iter = options.max_iterations;
    // run the interior point a couple of orders tighter than the contract
    // tolerance so residuals clear it with margin
    let eps = (options.tolerance * 1e-2).clamp(1e-12, 1e-8);
    settings.tol_gap_abs = eps;
    settings.tol_gap_rel = eps;
    settings.tol_feas = eps;

    let mut solver =
        DefaultSolver::new(&p, &program.objective, &a, &blocks.rhs, &cones, settings).map_err(
            |e| Error::InvalidParameter {
                what: "conic program",
                detail: format!("{e:?}"),
            },
        )?;
    solver.solve();
    let solution = &solver.solution;
    let status = solution.status;

    match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            let (family, detail) = diagnose_infeasibility(program);
            return Err(Error::Infeasible { family, detail });
        }
        other => {
            return Err(Error::NonConvergence {
                status: format!("{other:?}"),
                iterations: solution.iterations,
            });
        }
    }

    let schedule = extract_schedule(program, &solution.x)?;
    let plan = extract_plan(program, &solution.x);
    let schedule = trim_idle_deferral(program, schedule, plan.as_ref())?;
    finalize(
        program,
        schedule,
        plan,
        SolveDiagnostics {
            status: format!("{status:?}"),
            iterations: solution.iterations,
            solve_time_ms: solution.solve_time * 1e3,
            objective_usd: 0.0, // filled in finalize
            primal_residual: solution.r_prim,
            dual_residual: solution.r_dual,
        },
    )
}

/// Clamp, conserve, and cap the raw deferral variables.
fn extract_schedule(program: &ProgramSpec, x: &[f64]) -> Result<DeferralSchedule> {
    let lay = &program.layout;
    let demand = program.demand();
    let d_max = program.d_max();
    let tau = lay.tau;
    let mut eta = vec![vec![0.0; tau]; d_max + 1];
    for (col, &(t, d)) in lay.eta_vars.iter().enumerate() {
        eta[d][t] = x[col].max(0.0);
    }
    for t in 0..tau {
        let lam = demand.requests[t];
        let scheduled: f64 = (0..=d_max).map(|d| eta[d][t]).sum();
        if scheduled > 0.0 {
            let scale = lam / scheduled;
            for row in eta.iter_mut() {
                row[t] *= scale;
            }
        } else if lam > 0.0 {
            eta[0][t] = lam;
        }
        let elastic = demand.elastic_volume(t);
        let q: f64 = (1..=d_max).map(|d| eta[d][t]).sum();
        if q > elastic {
            let scale = elastic / q;
            for row in eta.iter_mut().skip(1) {
                row[t] *= scale;
            }
            eta[0][t] += q - elastic;
        }
    }
    DeferralSchedule::new(d_max, eta)
}

/// Undoes deferral that buys nothing: slot by slot, move the deferred volume
/// back to its arrival slot and keep the move whenever the electricity cost
/// (plus wear) does not increase. This realizes the smaller-total-deferral
/// tie-break exactly on the flat faces an interior point stops inside of.
fn trim_idle_deferral(
    program: &ProgramSpec,
    schedule: DeferralSchedule,
    plan: Option<&ShutdownPlan>,
) -> Result<DeferralSchedule> {
    let demand = program.demand();
    let fleet = program.fleet();
    let d_max = schedule.d_max();
    let tau = schedule.tau();
    let q = schedule.deferred_per_slot();
    if q.iter().all(|&v| v == 0.0) {
        return Ok(schedule);
    }
    let mut eta: Vec<Vec<f64>> = schedule.rows().to_vec();
    let mut lambda_hat = crate::model::scheduled_load(&schedule, demand)?;
    let reference = program.evaluate_cost(&schedule, plan)?;
    let mut best = reference.electricity() + reference.wear;
    for t in 0..tau {
        if q[t] <= 0.0 {
            continue;
        }
        let mut undone = 0.0;
        for row in eta.iter().skip(1) {
            undone += row[t];
        }
        if undone <= 0.0 {
            continue;
        }
        // the arrival slot absorbs the undone volume; it must still fit
        let headroom = match plan {
            Some(p) => p.running[t] * fleet.per_server_capacity,
            None => fleet.capacity(),
        };
        if lambda_hat[t] + undone > headroom {
            continue;
        }
        let mut candidate = eta.clone();
        candidate[0][t] += undone;
        for row in candidate.iter_mut().skip(1) {
            row[t] = 0.0;
        }
        let trial = DeferralSchedule::new(d_max, candidate)?;
        let cost = program.evaluate_cost(&trial, plan)?;
        let value = cost.electricity() + cost.wear;
        if value <= best * (1.0 + 1e-12) + 1e-12 {
            best = best.min(value);
            for (d, row) in eta.iter_mut().enumerate() {
                if d >= 1 && row[t] > 0.0 {
                    lambda_hat[t + d] -= row[t];
                    row[t] = 0.0;
                }
            }
            eta[0][t] += undone;
            lambda_hat[t] += undone;
        }
    }
    DeferralSchedule::new(d_max, eta)
}

fn extract_plan(program: &ProgramSpec, x: &[f64]) -> Option<ShutdownPlan> {
    let lay = &program.layout;
    let (on0, off0) = (lay.turn_on?, lay.turn_off?);
    let params = program.shutdown_params().expect("shutdown mode has params");
    let limit = params.max_toggle.unwrap_or(f64::INFINITY);
    let mut turned_on = Vec::with_capacity(lay.tau);
    let mut turned_off = Vec::with_capacity(lay.tau);
    let mut running = Vec::with_capacity(lay.tau);
    let mut level = params.initial_on;
    for t in 0..lay.tau {
        let on = x[on0 + t].clamp(0.0, limit);
        let off = x[off0 + t].clamp(0.0, limit);
        level += on - off;
        turned_on.push(on);
        turned_off.push(off);
        running.push(level);
    }
    Some(ShutdownPlan {
        turned_on,
        turned_off,
        running,
    })
}

/// Recover the reward, evaluate the cost both directly and through the
/// program matrices, and assemble the solution.
fn finalize(
    program: &ProgramSpec,
    schedule: DeferralSchedule,
    plan: Option<ShutdownPlan>,
    mut diagnostics: SolveDiagnostics,
) -> Result<Solution> {
    let rewards = optimal_reward(&schedule, program.demand())?;
    let mut cost = program.evaluate_cost(&schedule, plan.as_ref())?;
    cost.reward = total_reward(&schedule, &rewards)?;
    diagnostics.objective_usd = program.objective_through_matrices(&schedule, plan.as_ref())?;
    Ok(Solution {
        mode: program.mode(),
        schedule,
        rewards,
        shutdown: plan,
        cost,
        diagnostics,
    })
}

/// Best-effort naming of the constraint family blocking feasibility.
///
/// Base and renewable programs always admit the identity schedule, so a
/// certificate there points at numerical trouble rather than the model. The
/// shutdown program can genuinely pinch: the toggle budget may be too small
/// to raise enough servers, or toggling costs may break profit neutrality.
fn diagnose_infeasibility(program: &ProgramSpec) -> (String, String) {
    let demand = program.demand();
    let fleet = program.fleet();
    if program.mode() == Mode::Shutdown {
        let params = program.shutdown_params().expect("shutdown mode has params");
        let limit = params.max_toggle.unwrap_or(f64::INFINITY);
        let nu = fleet.per_server_capacity;
        let n = f64::from(fleet.servers);
        let mut running = params.initial_on;
        let mut turned_on = vec![0.0; demand.tau()];
        let mut turned_off = vec![0.0; demand.tau()];
        let mut levels = vec![0.0; demand.tau()];
        for t in 0..demand.tau() {
            let needed = demand.requests[t] / nu;
            let reachable_up = (running + limit).min(n);
            if needed > reachable_up + 1e-9 {
                return (
                    "server-count".into(),
                    format!(
                        "slot {t} needs {needed:.3} servers but at most {reachable_up:.3} are reachable"
                    ),
                );
            }
            let target = needed.max(running - limit).min(reachable_up);
            if target >= running {
                turned_on[t] = target - running;
            } else {
                turned_off[t] = running - target;
            }
            running = target;
            levels[t] = running;
        }
        let plan = ShutdownPlan {
            turned_on,
            turned_off,
            running: levels,
        };
        if let Ok(identity) =
            DeferralSchedule::identity(&demand.requests, program.d_max())
        {
            if let Ok(cost) = program.evaluate_cost(&identity, Some(&plan)) {
                if cost.total() > program.baseline().total() {
                    return (
                        "profit-neutrality".into(),
                        format!(
                            "serving on arrival costs {:.6} against a baseline of {:.6}",
                            cost.total(),
                            program.baseline().total()
                        ),
                    );
                }
            }
        }
    }
    (
        "unknown".into(),
        "solver returned an infeasibility certificate".into(),
    )
}
