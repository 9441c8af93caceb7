//! Convex cost-minimization programs over deferral schedules.
//!
//! Three program families share one structure: affine electricity cost with
//! peak terms lifted into per-window epigraph variables, linear scheduling
//! constraints, and a single convex quadratic profit-neutrality constraint
//! obtained by substituting the reward rule into the payment sum. See
//! [`program`] for the exact constraint blocks, [`solve`] for the conic
//! solver bridge, [`verify`] for residual auditing, and [`oracle`] for the
//! grid-enumeration reference optimizer used in tests.

mod oracle;
mod program;
mod solve;
mod verify;

pub use oracle::{brute_force_oracle, OracleResult};
pub use program::{
    build_base_program, build_renewable_program, build_shutdown_program, ProgramSpec,
};
pub use solve::solve;
pub use verify::{verify_solution, ConstraintFamily, FamilyResidual, ResidualReport};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::incentive::RewardSchedule;
use crate::model::{CostBreakdown, DeferralSchedule, FleetModel};

/// Which cost model the program minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Deferral only; every server stays on.
    Base,
    /// Deferral plus server shutdown with toggling overhead and wear.
    Shutdown,
    /// Deferral plus on-site renewable generation; unused energy is dropped.
    Renewable,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Base => "base",
            Mode::Shutdown => "shutdown",
            Mode::Renewable => "renewable",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Mode::Base),
            "shutdown" => Ok(Mode::Shutdown),
            "renewable" => Ok(Mode::Renewable),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected base|shutdown|renewable)"
            ))),
        }
    }
}

/// Default energy overhead per server toggle, KWh.
pub const DEFAULT_TOGGLE_ENERGY_KWH: f64 = 0.01;
/// Default wear-and-tear cost per server turn-on, $.
pub const DEFAULT_WEAR_COST_USD: f64 = 0.01;

/// Parameters of the server-shutdown extension.
#[derive(Debug, Clone, PartialEq)]
pub struct ShutdownParams {
    /// Servers on at the start of the cycle (`m[0]`, continuous relaxation).
    pub initial_on: f64,
    /// Energy overhead per server toggled on or off, KWh.
    pub toggle_energy_kwh: f64,
    /// Wear-and-tear cost per server turn-on, $.
    pub wear_cost_usd: f64,
    /// Per-slot upper bound on servers toggled on and off; `Some(0.0)` pins
    /// the running count to `initial_on`.
    pub max_toggle: Option<f64>,
}

impl ShutdownParams {
    pub fn new(initial_on: f64, toggle_energy_kwh: f64, wear_cost_usd: f64) -> Self {
        Self {
            initial_on,
            toggle_energy_kwh,
            wear_cost_usd,
            max_toggle: None,
        }
    }

    /// Starts the cycle with `initial_on` servers and the default toggling
    /// overhead and wear cost.
    pub fn with_defaults(initial_on: f64) -> Self {
        Self::new(initial_on, DEFAULT_TOGGLE_ENERGY_KWH, DEFAULT_WEAR_COST_USD)
    }

    pub(crate) fn validate(&self, fleet: &FleetModel) -> Result<()> {
        let n = f64::from(fleet.servers);
        if !self.initial_on.is_finite() || self.initial_on < 0.0 || self.initial_on > n {
            return Err(Error::InvalidParameter {
                what: "shutdown parameters",
                detail: format!("initial server count {} outside [0, {n}]", self.initial_on),
            });
        }
        for (name, v) in [
            ("toggle energy", self.toggle_energy_kwh),
            ("wear cost", self.wear_cost_usd),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter {
                    what: "shutdown parameters",
                    detail: format!("{name} {v} must be finite and non-negative"),
                });
            }
        }
        if let Some(c) = self.max_toggle {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidParameter {
                    what: "shutdown parameters",
                    detail: format!("toggle bound {c} must be finite and non-negative"),
                });
            }
        }
        Ok(())
    }
}

/// Renewable energy available per slot, KWh. Whatever the facility does not
/// consume is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewableProfile {
    pub energy_kwh: Vec<f64>,
}

impl RenewableProfile {
    pub fn new(energy_kwh: Vec<f64>) -> Result<Self> {
        for (t, &g) in energy_kwh.iter().enumerate() {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::InvalidParameter {
                    what: "renewable energy",
                    detail: format!("value {g} at slot {t}"),
                });
            }
        }
        Ok(Self { energy_kwh })
    }

    pub fn tau(&self) -> usize {
        self.energy_kwh.len()
    }
}

/// Relaxed server on/off decisions recovered from a shutdown-mode solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ShutdownPlan {
    /// Servers turned on per slot.
    pub turned_on: Vec<f64>,
    /// Servers turned off per slot.
    pub turned_off: Vec<f64>,
    /// Running server count per slot (prefix sums from the initial count).
    pub running: Vec<f64>,
}

impl ShutdownPlan {
    /// Integral running counts for reporting: each relaxed count is rounded
    /// up far enough to host the scheduled load, then re-checked against the
    /// fleet size.
    pub fn rounded_running(&self, fleet: &FleetModel, lambda_hat: &[f64]) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(self.running.len());
        for (t, (&m, &load)) in self.running.iter().zip(lambda_hat).enumerate() {
            let needed = load / fleet.per_server_capacity;
            let count = m.max(needed).ceil();
            if count > f64::from(fleet.servers) + 0.5 {
                return Err(Error::CapacityExceeded {
                    slot: t,
                    load_requests: load,
                    capacity_requests: fleet.capacity(),
                });
            }
            out.push(count.min(f64::from(fleet.servers)).max(0.0) as u32);
        }
        Ok(out)
    }
}

/// Solver diagnostics attached to every solution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveDiagnostics {
    /// Terminal solver status.
    pub status: String,
    pub iterations: u32,
    pub solve_time_ms: f64,
    /// Objective evaluated through the program matrices at the returned
    /// point, $ (electricity cost of the mode; rewards and wear live in the
    /// profit constraint).
    pub objective_usd: f64,
    /// Solver-reported primal residual.
    pub primal_residual: f64,
    /// Solver-reported dual residual.
    pub dual_residual: f64,
}

/// A solved program: the schedule, the reward that makes it incentive-
/// compatible, the shutdown plan when applicable, and the itemized cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub mode: Mode,
    pub schedule: DeferralSchedule,
    pub rewards: RewardSchedule,
    pub shutdown: Option<ShutdownPlan>,
    pub cost: CostBreakdown,
    pub diagnostics: SolveDiagnostics,
}

/// Solver tolerances and budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Relative feasibility/optimality tolerance required of the solution.
    pub tolerance: f64,
    /// Interior-point iteration budget.
    pub max_iterations: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

impl SolveOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BillingModel, DemandInput, DemandWindow, FleetModel};
    use approx::assert_relative_eq;

    fn toy_billing(tau: usize) -> BillingModel {
        BillingModel::new(
            1.0,
            vec![0.05; tau],
            vec![DemandWindow::full_cycle(tau, 15.59).unwrap()],
        )
        .unwrap()
    }

    fn toy_fleet(tau: usize) -> FleetModel {
        FleetModel::with_constant_pue(2, 0.1, 0.1, 5.0, 1.2, tau).unwrap()
    }

    fn toy_demand(requests: Vec<f64>) -> DemandInput {
        DemandInput::with_uniform_band(requests, 0.5, 1e-3, 1e-2).unwrap()
    }

    #[test]
    fn no_deferral_recovers_the_baseline_exactly() {
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let program = build_base_program(&demand, &fleet, &billing, 0).unwrap();
        let solution = solve(&program, &SolveOptions::default()).unwrap();
        assert_eq!(solution.cost.total(), program.baseline().total());
        assert_eq!(solution.cost.reward, 0.0);
        assert_eq!(solution.diagnostics.iterations, 0);
        let report = verify_solution(&solution, &program).unwrap();
        assert_eq!(report.max_violation(), 0.0);
        assert!(report.objectives_match());
    }

    #[test]
    fn flat_demand_has_no_peak_to_shave() {
        let demand = toy_demand(vec![5.0; 6]);
        let fleet = toy_fleet(6);
        let billing = toy_billing(6);
        let program = build_base_program(&demand, &fleet, &billing, 2).unwrap();
        let solution = solve(&program, &SolveOptions::default()).unwrap();
        let baseline = program.baseline().total();
        assert!((solution.cost.total() - baseline).abs() <= 1e-6 * baseline);
    }

    #[test]
    fn toy_optimum_matches_grid_oracle() {
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let oracle = brute_force_oracle(&demand, &fleet, &billing, 1, 21).unwrap();
        let program = build_base_program(&demand, &fleet, &billing, 1).unwrap();
        let solution = solve(&program, &SolveOptions::default()).unwrap();
        let gap = (solution.cost.electricity() - oracle.cost.electricity()).abs();
        assert!(
            gap <= 0.01 * oracle.cost.electricity(),
            "solver {} vs oracle {}",
            solution.cost.electricity(),
            oracle.cost.electricity()
        );
        // the oracle point is feasible, so the solver must not be worse
        assert!(solution.cost.electricity() <= oracle.cost.electricity() * (1.0 + 1e-6));
    }

    #[test]
    fn oracle_returns_identity_when_deferral_is_forbidden() {
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let oracle = brute_force_oracle(&demand, &fleet, &billing, 0, 21).unwrap();
        assert_eq!(oracle.schedule.total_deferred(), 0.0);
        assert_eq!(oracle.cost.total(), oracle.cost.baseline);
        assert_eq!(oracle.points_evaluated, 1);
    }

    #[test]
    fn oracle_rejects_oversized_instances() {
        let demand = toy_demand(vec![5.0; 24]);
        let fleet = toy_fleet(24);
        let billing = toy_billing(24);
        assert!(matches!(
            brute_force_oracle(&demand, &fleet, &billing, 4, 21),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn verifier_flags_a_hand_perturbed_schedule() {
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let program = build_base_program(&demand, &fleet, &billing, 1).unwrap();
        let mut solution = solve(&program, &SolveOptions::default()).unwrap();
        // drop half of slot 1's scheduled requests
        let mut eta: Vec<Vec<f64>> = solution.schedule.rows().to_vec();
        eta[0][1] -= 1.0;
        solution.schedule = crate::model::DeferralSchedule::new(1, eta).unwrap();
        let report = verify_solution(&solution, &program).unwrap();
        let served = report
            .families
            .iter()
            .find(|f| f.family == ConstraintFamily::DemandSatisfaction)
            .unwrap();
        assert!(served.max_violation > 0.1);
        assert_eq!(served.worst_index, Some(1));
    }

    #[test]
    fn free_toggling_never_beats_paid_toggling() {
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let base = solve(
            &build_base_program(&demand, &fleet, &billing, 1).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        let mut params = ShutdownParams::new(2.0, 0.0, 0.0);
        params.max_toggle = None;
        let shut = solve(
            &build_shutdown_program(&demand, &fleet, &billing, 1, params).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        // with free toggling the shutdown feasible set contains every base
        // decision, so its optimum can only be cheaper
        assert!(shut.cost.electricity() <= base.cost.electricity() * (1.0 + 1e-6));
    }

    #[test]
    fn pinned_toggling_reduces_to_the_base_program() {
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let base = solve(
            &build_base_program(&demand, &fleet, &billing, 1).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        let mut params = ShutdownParams::with_defaults(2.0);
        params.max_toggle = Some(0.0);
        let shut = solve(
            &build_shutdown_program(&demand, &fleet, &billing, 1, params).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(
            shut.cost.electricity(),
            base.cost.electricity(),
            max_relative = 1e-6
        );
        assert_eq!(shut.cost.wear, 0.0);
        let plan = shut.shutdown.as_ref().unwrap();
        assert!(plan.running.iter().all(|&m| (m - 2.0).abs() < 1e-9));
    }

    #[test]
    fn initial_server_count_must_fit_the_fleet() {
        let demand = toy_demand(vec![1.0; 4]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let params = ShutdownParams::with_defaults(3.0); // fleet has 2
        assert!(matches!(
            build_shutdown_program(&demand, &fleet, &billing, 1, params),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn unreachable_server_demand_is_diagnosed() {
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let mut params = ShutdownParams::with_defaults(0.0);
        params.max_toggle = Some(0.0); // no way to turn servers on
        let program = build_shutdown_program(&demand, &fleet, &billing, 1, params).unwrap();
        match solve(&program, &SolveOptions::default()) {
            Err(Error::Infeasible { family, .. }) => assert_eq!(family, "server-count"),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn zero_renewables_match_the_base_program() {
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let base = solve(
            &build_base_program(&demand, &fleet, &billing, 1).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        let green = RenewableProfile::new(vec![0.0; 4]).unwrap();
        let renew = solve(
            &build_renewable_program(&demand, &fleet, &billing, 1, green).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(
            renew.cost.electricity(),
            base.cost.electricity(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn abundant_renewables_zero_the_bill() {
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let green = RenewableProfile::new(vec![100.0; 4]).unwrap();
        let solution = solve(
            &build_renewable_program(&demand, &fleet, &billing, 1, green).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(solution.cost.electricity() <= 1e-9);
        // nothing to gain from deferral, so the tie-break keeps it at zero
        assert!(solution.cost.reward <= 1e-6);
        assert!(solution.schedule.total_deferred() <= 1e-3);
    }

    #[test]
    fn negative_renewables_rejected() {
        assert!(RenewableProfile::new(vec![1.0, -0.5]).is_err());
    }

    #[test]
    fn larger_rewards_cost_weakly_more() {
        // cost is reward-independent by construction; payments grow
        // pointwise with the reward
        let demand = toy_demand(vec![8.0, 2.0, 1.0, 1.0]);
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        let program = build_base_program(&demand, &fleet, &billing, 1).unwrap();
        let solution = solve(&program, &SolveOptions::default()).unwrap();
        let gamma_star = &solution.rewards;
        let bumped = crate::incentive::RewardSchedule::new(
            gamma_star
                .usd_per_request
                .iter()
                .zip(&demand.reward_ceiling)
                .map(|(&g, &ub)| (g * 1.5).min(ub))
                .collect(),
        )
        .unwrap();
        let paid_star =
            crate::incentive::total_reward(&solution.schedule, gamma_star).unwrap();
        let paid_bumped =
            crate::incentive::total_reward(&solution.schedule, &bumped).unwrap();
        assert!(paid_bumped >= paid_star);
        let cost_again = program
            .evaluate_cost(&solution.schedule, solution.shutdown.as_ref())
            .unwrap();
        assert_eq!(cost_again.electricity(), solution.cost.electricity());
    }

    #[test]
    fn solutions_verify_out_of_the_box() {
        let demand = toy_demand(vec![8.0, 2.0, 6.0, 1.0, 3.0, 9.0]);
        let fleet = toy_fleet(6);
        let billing = toy_billing(6);
        for d in [0, 1, 3] {
            let program = build_base_program(&demand, &fleet, &billing, d).unwrap();
            let solution = solve(&program, &SolveOptions::default()).unwrap();
            let report = verify_solution(&solution, &program).unwrap();
            assert!(
                report.passes(1e-6),
                "D={d}: {report}"
            );
        }
    }

    #[test]
    fn overloaded_demand_rejected_at_build() {
        let demand = toy_demand(vec![11.0, 2.0, 1.0, 1.0]); // capacity is 10
        let fleet = toy_fleet(4);
        let billing = toy_billing(4);
        assert!(matches!(
            build_base_program(&demand, &fleet, &billing, 1),
            Err(Error::CapacityExceeded { slot: 0, .. })
        ));
    }
}
