//! Constraint-by-constraint audit of a solution, independent of the solver.
//!
//! Every violation is reported relative to its constraint's scale, so the
//! report can be compared against the solve tolerance directly. The cost
//! recorded by the solver (evaluated through the assembled matrices) is also
//! checked against a from-scratch evaluation of the cost formulas.

use crate::error::{Error, Result};
use crate::model::scheduled_load;
use crate::optimizer::program::ProgramSpec;
use crate::optimizer::{Mode, Solution};

/// Relative agreement required between the matrix-route objective and the
/// direct formula evaluation.
pub const OBJECTIVE_MATCH_REL: f64 = 1e-9;

/// Constraint families of the three programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    /// Deferral amounts non-negative and inside the cycle.
    NonNegativity,
    /// Every arrival is scheduled exactly once.
    DemandSatisfaction,
    /// Scheduled load within fleet capacity.
    Capacity,
    /// Deferred volume within the elastic volume of its slot.
    DeferralCap,
    /// Rewards inside the announced band.
    RewardBand,
    /// Running server count hosts the load and fits the fleet.
    ServerCount,
    /// Running counts follow the toggles from the initial count.
    ServerContinuity,
    /// Toggles non-negative and within the per-slot bound.
    ToggleDomain,
    /// Reported demand charges equal the billed window peaks.
    WindowPeak,
    /// Cost plus rewards plus wear within the baseline.
    ProfitNeutrality,
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintFamily::NonNegativity => "non-negativity",
            ConstraintFamily::DemandSatisfaction => "demand-satisfaction",
            ConstraintFamily::Capacity => "capacity",
            ConstraintFamily::DeferralCap => "deferral-cap",
            ConstraintFamily::RewardBand => "reward-band",
            ConstraintFamily::ServerCount => "server-count",
            ConstraintFamily::ServerContinuity => "server-continuity",
            ConstraintFamily::ToggleDomain => "toggle-domain",
            ConstraintFamily::WindowPeak => "window-peak",
            ConstraintFamily::ProfitNeutrality => "profit-neutrality",
        })
    }
}

/// Worst relative violation within one family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyResidual {
    pub family: ConstraintFamily,
    pub max_violation: f64,
    /// Slot (or window) where the worst violation occurs.
    pub worst_index: Option<usize>,
}

/// Full audit of one solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub families: Vec<FamilyResidual>,
    /// Cost recomputed from the model formulas, $.
    pub objective_direct_usd: f64,
    /// Cost recorded by the solver through the program matrices, $.
    pub objective_matrix_usd: f64,
    /// Slack left in the profit constraint, $ (negative when violated).
    pub profit_slack_usd: f64,
}

impl ResidualReport {
    pub fn max_violation(&self) -> f64 {
        self.families
            .iter()
            .map(|f| f.max_violation)
            .fold(0.0, f64::max)
    }

    /// Relative disagreement between the two objective evaluations.
    pub fn objective_gap(&self) -> f64 {
        (self.objective_direct_usd - self.objective_matrix_usd).abs()
            / (1.0 + self.objective_direct_usd.abs())
    }

    pub fn objectives_match(&self) -> bool {
        self.objective_gap() <= OBJECTIVE_MATCH_REL
    }

    /// Whether every family is within `tol` and the two cost routes agree.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation() <= tol && self.objectives_match()
    }
}

impl std::fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for fam in &self.families {
            match fam.worst_index {
                Some(i) => writeln!(
                    f,
                    "{:<20} max violation {:.3e} (slot {})",
                    fam.family.to_string(),
                    fam.max_violation,
                    i
                )?,
                None => writeln!(
                    f,
                    "{:<20} max violation {:.3e}",
                    fam.family.to_string(),
                    fam.max_violation
                )?,
            }
        }
        writeln!(
            f,
            "objective            direct {:.9} / matrices {:.9} (gap {:.3e})",
            self.objective_direct_usd,
            self.objective_matrix_usd,
            self.objective_gap()
        )?;
        write!(f, "profit slack         {:.9} $", self.profit_slack_usd)
    }
}

struct FamilyTracker {
    family: ConstraintFamily,
    worst: f64,
    index: Option<usize>,
}

impl FamilyTracker {
    fn new(family: ConstraintFamily) -> Self {
        Self {
            family,
            worst: 0.0,
            index: None,
        }
    }

    /// Record violation `amount` (already non-negative) scaled by `scale`.
    fn observe(&mut self, amount: f64, scale: f64, index: usize) {
        let v = amount.max(0.0) / (1.0 + scale.abs());
        if v > self.worst {
            self.worst = v;
            self.index = Some(index);
        }
    }

    fn into_residual(self) -> FamilyResidual {
        FamilyResidual {
            family: self.family,
            max_violation: self.worst,
            worst_index: self.index,
        }
    }
}

/// Evaluates every constraint of the solved program at the solution and
/// reports the worst violation per family. Reporting only: violations never
/// error, only shape mismatches do.
pub fn verify_solution(solution: &Solution, program: &ProgramSpec) -> Result<ResidualReport> {
    let demand = program.demand();
    let fleet = program.fleet();
    let billing = program.billing();
    let schedule = &solution.schedule;
    if schedule.tau() != demand.tau() {
        return Err(Error::DimensionMismatch {
            what: "schedule horizon",
            expected: demand.tau(),
            actual: schedule.tau(),
        });
    }
    if solution.mode != program.mode() {
        return Err(Error::InvalidParameter {
            what: "solution",
            detail: format!(
                "mode {} does not match the program's {}",
                solution.mode,
                program.mode()
            ),
        });
    }
    let tau = demand.tau();
    let lambda_hat = scheduled_load(schedule, demand)?;
    let q = schedule.deferred_per_slot();
    let mut families = Vec::new();

    // (10) + boundary: the schedule type keeps entries finite, but audit the
    // raw values anyway
    let mut nonneg = FamilyTracker::new(ConstraintFamily::NonNegativity);
    for (d, row) in schedule.rows().iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            nonneg.observe(-v, demand.requests[t], t);
            if t + d >= tau {
                nonneg.observe(v.abs(), demand.requests[t], t);
            }
        }
    }
    families.push(nonneg.into_residual());

    let mut served = FamilyTracker::new(ConstraintFamily::DemandSatisfaction);
    for t in 0..tau {
        let total: f64 = schedule.rows().iter().map(|row| row[t]).sum();
        served.observe((total - demand.requests[t]).abs(), demand.requests[t], t);
    }
    families.push(served.into_residual());

    match solution.mode {
        Mode::Base | Mode::Renewable => {
            let mut capacity = FamilyTracker::new(ConstraintFamily::Capacity);
            let cap = fleet.capacity();
            for (t, &load) in lambda_hat.iter().enumerate() {
                capacity.observe(load - cap, cap, t);
            }
            families.push(capacity.into_residual());
        }
        Mode::Shutdown => {
            let params = program.shutdown_params().expect("shutdown mode has params");
            let n = f64::from(fleet.servers);
            let mut count = FamilyTracker::new(ConstraintFamily::ServerCount);
            let mut continuity = FamilyTracker::new(ConstraintFamily::ServerContinuity);
            let mut toggles = FamilyTracker::new(ConstraintFamily::ToggleDomain);
            match &solution.shutdown {
                Some(plan) => {
                    let mut level = params.initial_on;
                    for t in 0..tau {
                        let needed = lambda_hat[t] / fleet.per_server_capacity;
                        count.observe(needed - plan.running[t], n, t);
                        count.observe(plan.running[t] - n, n, t);
                        level += plan.turned_on[t] - plan.turned_off[t];
                        continuity.observe((plan.running[t] - level).abs(), n, t);
                        level = plan.running[t];
                        toggles.observe(-plan.turned_on[t], n, t);
                        toggles.observe(-plan.turned_off[t], n, t);
                        if let Some(limit) = params.max_toggle {
                            toggles.observe(plan.turned_on[t] - limit, n, t);
                            toggles.observe(plan.turned_off[t] - limit, n, t);
                        }
                    }
                }
                None => {
                    count.observe(f64::INFINITY, 0.0, 0);
                }
            }
            families.push(count.into_residual());
            families.push(continuity.into_residual());
            families.push(toggles.into_residual());
        }
    }

    let mut cap_rows = FamilyTracker::new(ConstraintFamily::DeferralCap);
    for t in 0..tau {
        let elastic = demand.elastic_volume(t);
        cap_rows.observe(q[t] - elastic, elastic, t);
    }
    families.push(cap_rows.into_residual());

    let mut band = FamilyTracker::new(ConstraintFamily::RewardBand);
    for (t, &g) in solution.rewards.usd_per_request.iter().enumerate() {
        band.observe(demand.reward_floor[t] - g, demand.reward_floor[t], t);
        band.observe(g - demand.reward_ceiling[t], demand.reward_ceiling[t], t);
    }
    families.push(band.into_residual());

    // reported demand charges against recomputed window peaks
    let billed = program.billed_power(&lambda_hat, solution.shutdown.as_ref())?;
    let mut window = FamilyTracker::new(ConstraintFamily::WindowPeak);
    for (j, w) in billing.windows.iter().enumerate() {
        let peak = w
            .slots
            .iter()
            .map(|&t| billed[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let expected = w.price_per_kw * peak;
        window.observe(
            (solution.cost.demand.get(j).copied().unwrap_or(f64::NAN) - expected).abs(),
            expected,
            j,
        );
    }
    families.push(window.into_residual());

    // (16): recompute everything from scratch
    let mut fresh = program.evaluate_cost(schedule, solution.shutdown.as_ref())?;
    fresh.reward = crate::incentive::total_reward(schedule, &solution.rewards)?;
    let baseline = program.baseline().total();
    let profit_slack = baseline - fresh.total();
    let mut profit = FamilyTracker::new(ConstraintFamily::ProfitNeutrality);
    profit.observe(-profit_slack, baseline, 0);
    families.push(profit.into_residual());

    Ok(ResidualReport {
        families,
        objective_direct_usd: fresh.electricity(),
        objective_matrix_usd: solution.diagnostics.objective_usd,
        profit_slack_usd: profit_slack,
    })
}
