//! Assembly of the three cost-minimization programs in conic form.
//!
//! Decision variables are the deferral amounts `eta[d][t]` (one column per
//! admissible `(t, d)` pair), mode-specific extras, and one epigraph
//! variable per demand window bounding its peak term:
//!
//! - base: `min sum_t T a[t] P[t] + sum_j b_j z_j` with `z_j >= P[t]` on the
//!   window, capacity, demand satisfaction, and the deferral cap
//!   `q[t] <= pi[t] lam[t]` keeping the reward rule inside its band;
//! - shutdown: running server counts `m[t]` enter through per-slot
//!   continuity equalities, loads must fit on running servers, and toggles
//!   pay an energy overhead and a wear cost;
//! - renewable: per-slot surpluses `s[t] >= T P[t] - G[t], s[t] >= 0`
//!   linearize the positive-part energy term, and window variables
//!   `z_j >= P[t] - G[t]/T, z_j >= 0` the positive-part peak.
//!
//! Profit neutrality (cost + rewards + wear never exceeding the no-response
//! baseline) becomes one second-order-cone row after substituting the
//! minimal incentive-compatible reward, which turns payments into the
//! separable quadratic `sum_t w_t q_t^2 + Lb_t q_t`, `w_t = (Ub-Lb)/(pi lam)`.

use crate::error::{Error, Result};
use crate::model::{
    baseline_cost, electricity_cost, power_profile, scheduled_load, BillingModel, CostBreakdown,
    DeferralSchedule, DemandInput, FleetModel,
};
use crate::optimizer::{Mode, RenewableProfile, ShutdownParams, ShutdownPlan};

/// Secondary objective weight preferring smaller total deferral among
/// equally cheap schedules, for determinism.
pub(crate) const TIE_BREAK_WEIGHT: f64 = 1e-9;

/// Column layout of one assembled program.
#[derive(Debug, Clone)]
pub(crate) struct VarLayout {
    pub tau: usize,
    /// Column of `eta[d][t]`, if the pair is admissible.
    pub eta_col: Vec<Vec<Option<usize>>>,
    /// `(t, d)` of every eta column, in column order.
    pub eta_vars: Vec<(usize, usize)>,
    /// First column of the running-count block (shutdown).
    pub running: Option<usize>,
    /// First column of the turn-on block (shutdown).
    pub turn_on: Option<usize>,
    /// First column of the turn-off block (shutdown).
    pub turn_off: Option<usize>,
    /// First column of the per-slot surplus block (renewable).
    pub surplus: Option<usize>,
    /// First column of the per-window peak block.
    pub peak: usize,
    /// Total columns.
    pub n: usize,
}

/// Sparse rows in triplet form plus cone sizes, in cone order
/// (equalities, then inequalities, then one second-order cone).
#[derive(Debug, Clone, Default)]
pub(crate) struct ConicBlocks {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub rhs: Vec<f64>,
    pub n_eq: usize,
    pub n_ineq: usize,
    pub soc_dim: usize,
}

impl ConicBlocks {
    fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.rhs.len();
        for (c, v) in entries {
            if v != 0.0 {
                self.rows.push(r);
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.rhs.push(rhs);
    }
}

/// One of the three programs, assembled and ready to solve.
#[derive(Debug, Clone)]
pub struct ProgramSpec {
    mode: Mode,
    demand: DemandInput,
    fleet: FleetModel,
    billing: BillingModel,
    d_max: usize,
    shutdown: Option<ShutdownParams>,
    green: Option<RenewableProfile>,
    baseline: CostBreakdown,
    pub(crate) layout: VarLayout,
    /// Slots owning at least one deferral column, in order.
    pub(crate) active_slots: Vec<usize>,
    /// Objective including the tie-break term.
    pub(crate) objective: Vec<f64>,
    /// Pure cost coefficients (no tie-break).
    pub(crate) cost_linear: Vec<f64>,
    /// Constant cost term outside the variables, $.
    pub(crate) cost_const: f64,
    pub(crate) blocks: ConicBlocks,
}

impl ProgramSpec {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn demand(&self) -> &DemandInput {
        &self.demand
    }

    pub fn fleet(&self) -> &FleetModel {
        &self.fleet
    }

    pub fn billing(&self) -> &BillingModel {
        &self.billing
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn shutdown_params(&self) -> Option<&ShutdownParams> {
        self.shutdown.as_ref()
    }

    pub fn renewable(&self) -> Option<&RenewableProfile> {
        self.green.as_ref()
    }

    /// Cycle cost with no demand response, the profit-neutrality reference.
    pub fn baseline(&self) -> &CostBreakdown {
        &self.baseline
    }

    pub fn variable_count(&self) -> usize {
        self.layout.n
    }

    pub fn constraint_count(&self) -> usize {
        self.blocks.rhs.len()
    }

    /// Electricity cost (and wear) of a schedule under this program's cost
    /// model, evaluated directly from the model formulas. The reward
    /// component is left at zero; `baseline` is set to this program's
    /// reference cost.
    pub fn evaluate_cost(
        &self,
        schedule: &DeferralSchedule,
        plan: Option<&ShutdownPlan>,
    ) -> Result<CostBreakdown> {
        let lambda_hat = scheduled_load(schedule, &self.demand)?;
        let mut cost = match self.mode {
            Mode::Base => {
                let power = power_profile(&lambda_hat, &self.fleet)?;
                electricity_cost(&power, &self.billing)?
            }
            Mode::Shutdown => {
                let plan = plan.ok_or(Error::InvalidParameter {
                    what: "shutdown plan",
                    detail: "required to evaluate a shutdown-mode schedule".into(),
                })?;
                self.shutdown_cost(&lambda_hat, plan)?
            }
            Mode::Renewable => self.renewable_cost(&lambda_hat)?,
        };
        cost.baseline = self.baseline.total();
        Ok(cost)
    }

    /// Peak the demand charge would see over the whole cycle, KW.
    pub fn billed_peak_kw(
        &self,
        schedule: &DeferralSchedule,
        plan: Option<&ShutdownPlan>,
    ) -> Result<f64> {
        let lambda_hat = scheduled_load(schedule, &self.demand)?;
        let series = self.billed_power(&lambda_hat, plan)?;
        Ok(series.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Per-slot power the demand charge prices: plain facility power in base
    /// mode, shutdown power plus amortized toggling overhead in shutdown
    /// mode, grid draw net of renewables in renewable mode.
    pub(crate) fn billed_power(
        &self,
        lambda_hat: &[f64],
        plan: Option<&ShutdownPlan>,
    ) -> Result<Vec<f64>> {
        match self.mode {
            Mode::Base => Ok(power_profile(lambda_hat, &self.fleet)?.kw),
            Mode::Shutdown => {
                let plan = plan.ok_or(Error::InvalidParameter {
                    what: "shutdown plan",
                    detail: "required to evaluate a shutdown-mode schedule".into(),
                })?;
                let params = self.shutdown.as_ref().expect("shutdown mode has params");
                let t_h = self.billing.slot_hours;
                Ok((0..self.layout.tau)
                    .map(|t| {
                        let ps = self.shutdown_power(lambda_hat, plan, t);
                        let po = params.toggle_energy_kwh
                            * (plan.turned_on[t] + plan.turned_off[t]);
                        ps + self.fleet.pue[t] * po / t_h
                    })
                    .collect())
            }
            Mode::Renewable => {
                let power = power_profile(lambda_hat, &self.fleet)?;
                let green = self.green.as_ref().expect("renewable mode has a profile");
                let t_h = self.billing.slot_hours;
                Ok(power
                    .kw
                    .iter()
                    .zip(&green.energy_kwh)
                    .map(|(&p, &g)| (p - g / t_h).max(0.0))
                    .collect())
            }
        }
    }

    /// `P_s[t]`: facility power with `running[t]` servers on.
    fn shutdown_power(&self, lambda_hat: &[f64], plan: &ShutdownPlan, t: usize) -> f64 {
        self.fleet.pue[t]
            * (plan.running[t] * self.fleet.idle_power_kw
                + lambda_hat[t] / self.fleet.per_server_capacity * self.fleet.util_power_kw)
    }

    fn shutdown_cost(&self, lambda_hat: &[f64], plan: &ShutdownPlan) -> Result<CostBreakdown> {
        let tau = self.layout.tau;
        for (name, series) in [
            ("turn-on", &plan.turned_on),
            ("turn-off", &plan.turned_off),
            ("running", &plan.running),
        ] {
            if series.len() != tau {
                return Err(Error::DimensionMismatch {
                    what: name,
                    expected: tau,
                    actual: series.len(),
                });
            }
        }
        let params = self.shutdown.as_ref().expect("shutdown mode has params");
        let t_h = self.billing.slot_hours;
        let mut energy = 0.0;
        for t in 0..tau {
            let ps = self.shutdown_power(lambda_hat, plan, t);
            let po = params.toggle_energy_kwh * (plan.turned_on[t] + plan.turned_off[t]);
            energy += self.billing.energy_price[t] * (t_h * ps + self.fleet.pue[t] * po);
        }
        let billed = self.billed_power(lambda_hat, Some(plan))?;
        let demand = window_peaks(&self.billing, &billed);
        let wear: f64 = params.wear_cost_usd * plan.turned_on.iter().sum::<f64>();
        Ok(CostBreakdown {
            energy,
            demand,
            reward: 0.0,
            wear,
            baseline: 0.0,
        })
    }

    fn renewable_cost(&self, lambda_hat: &[f64]) -> Result<CostBreakdown> {
        let power = power_profile(lambda_hat, &self.fleet)?;
        let green = self.green.as_ref().expect("renewable mode has a profile");
        let t_h = self.billing.slot_hours;
        let energy: f64 = power
            .kw
            .iter()
            .zip(&green.energy_kwh)
            .zip(&self.billing.energy_price)
            .map(|((&p, &g), &a)| a * (t_h * p - g).max(0.0))
            .sum();
        let billed = self.billed_power(lambda_hat, None)?;
        let demand = window_peaks(&self.billing, &billed);
        Ok(CostBreakdown {
            energy,
            demand,
            reward: 0.0,
            wear: 0.0,
            baseline: 0.0,
        })
    }

    /// The objective `c'x + c0` evaluated through the assembled coefficient
    /// vector at a point reconstructed from solution pieces, with epigraph
    /// entries set to the terms they bound. Used to cross-check the matrix
    /// encoding against direct formula evaluation.
    pub(crate) fn objective_through_matrices(
        &self,
        schedule: &DeferralSchedule,
        plan: Option<&ShutdownPlan>,
    ) -> Result<f64> {
        let x = self.assemble_point(schedule, plan)?;
        let dot: f64 = self
            .cost_linear
            .iter()
            .zip(&x)
            .map(|(&c, &v)| c * v)
            .sum();
        Ok(dot + self.cost_const)
    }

    /// Full variable vector for a schedule (+plan), with surplus and peak
    /// variables at their tight values.
    pub(crate) fn assemble_point(
        &self,
        schedule: &DeferralSchedule,
        plan: Option<&ShutdownPlan>,
    ) -> Result<Vec<f64>> {
        let lay = &self.layout;
        let mut x = vec![0.0; lay.n];
        for (col, &(t, d)) in lay.eta_vars.iter().enumerate() {
            x[col] = schedule.eta(d, t);
        }
        let lambda_hat = scheduled_load(schedule, &self.demand)?;
        if let (Some(m0), Some(on0), Some(off0)) = (lay.running, lay.turn_on, lay.turn_off) {
            let plan = plan.ok_or(Error::InvalidParameter {
                what: "shutdown plan",
                detail: "required to assemble a shutdown-mode point".into(),
            })?;
            for t in 0..lay.tau {
                x[m0 + t] = plan.running[t];
                x[on0 + t] = plan.turned_on[t];
                x[off0 + t] = plan.turned_off[t];
            }
        }
        if let Some(s0) = lay.surplus {
            let power = power_profile(&lambda_hat, &self.fleet)?;
            let green = self.green.as_ref().expect("renewable mode has a profile");
            for t in 0..lay.tau {
                x[s0 + t] =
                    (self.billing.slot_hours * power.kw[t] - green.energy_kwh[t]).max(0.0);
            }
        }
        let billed = self.billed_power(&lambda_hat, plan)?;
        for (j, w) in self.billing.windows.iter().enumerate() {
            x[lay.peak + j] = w
                .slots
                .iter()
                .map(|&t| billed[t])
                .fold(f64::NEG_INFINITY, f64::max);
        }
        Ok(x)
    }
}

fn window_peaks(billing: &BillingModel, billed_kw: &[f64]) -> Vec<f64> {
    billing
        .windows
        .iter()
        .map(|w| {
            let peak = w
                .slots
                .iter()
                .map(|&t| billed_kw[t])
                .fold(f64::NEG_INFINITY, f64::max);
            w.price_per_kw * peak
        })
        .collect()
}

/// Shared validation: consistent horizons and demand the fleet can host.
pub(crate) fn check_inputs(demand: &DemandInput, fleet: &FleetModel, billing: &BillingModel) -> Result<()> {
    let tau = billing.tau();
    if demand.tau() != tau {
        return Err(Error::DimensionMismatch {
            what: "demand horizon",
            expected: tau,
            actual: demand.tau(),
        });
    }
    if fleet.tau() != tau {
        return Err(Error::DimensionMismatch {
            what: "pue horizon",
            expected: tau,
            actual: fleet.tau(),
        });
    }
    let cap = fleet.capacity();
    for (t, &lam) in demand.requests.iter().enumerate() {
        if lam > cap {
            return Err(Error::CapacityExceeded {
                slot: t,
                load_requests: lam,
                capacity_requests: cap,
            });
        }
    }
    Ok(())
}

struct Builder<'a> {
    demand: &'a DemandInput,
    fleet: &'a FleetModel,
    billing: &'a BillingModel,
    d_max: usize,
    layout: VarLayout,
    active_slots: Vec<usize>,
    reward_weight: Vec<f64>,
}

impl<'a> Builder<'a> {
    fn layout(
        demand: &'a DemandInput,
        fleet: &'a FleetModel,
        billing: &'a BillingModel,
        d_max: usize,
        mode: Mode,
    ) -> Self {
        let tau = billing.tau();
        let mut eta_col = vec![vec![None; d_max + 1]; tau];
        let mut eta_vars = Vec::new();
        for t in 0..tau {
            for d in 0..=d_max {
                if t + d >= tau && d > 0 {
                    continue; // requests may not spill past the cycle
                }
                if d >= 1 && demand.elastic_volume(t) <= 0.0 {
                    continue; // nothing deferrable at this slot
                }
                eta_col[t][d] = Some(eta_vars.len());
                eta_vars.push((t, d));
            }
        }
        let n_eta = eta_vars.len();
        let mut next = n_eta;
        let mut block = |count: usize| {
            let start = next;
            next += count;
            start
        };
        let (running, turn_on, turn_off, surplus) = match mode {
            Mode::Shutdown => (
                Some(block(tau)),
                Some(block(tau)),
                Some(block(tau)),
                None,
            ),
            Mode::Renewable => (None, None, None, Some(block(tau))),
            Mode::Base => (None, None, None, None),
        };
        let peak = block(billing.windows.len());
        let layout = VarLayout {
            tau,
            eta_col,
            eta_vars,
            running,
            turn_on,
            turn_off,
            surplus,
            peak,
            n: next,
        };
        let active_slots: Vec<usize> = (0..tau)
            .filter(|&t| layout.eta_col[t].iter().skip(1).any(Option::is_some))
            .collect();
        let reward_weight = active_slots
            .iter()
            .map(|&t| {
                (demand.reward_ceiling[t] - demand.reward_floor[t]) / demand.elastic_volume(t)
            })
            .collect();
        Self {
            demand,
            fleet,
            billing,
            d_max,
            layout,
            active_slots,
            reward_weight,
        }
    }

    /// Columns landing at slot `t`, i.e. the terms of `lhat[t]`.
    fn landing_cols(&self, t: usize) -> Vec<usize> {
        (0..=self.d_max.min(t))
            .filter_map(|d| self.layout.eta_col[t - d][d])
            .collect()
    }

    /// Deferral columns of arrival slot `t` (d >= 1).
    fn deferral_cols(&self, t: usize) -> Vec<usize> {
        (1..=self.d_max)
            .filter_map(|d| self.layout.eta_col[t][d])
            .collect()
    }

    fn energy_rate(&self, t: usize) -> f64 {
        self.billing.slot_hours * self.billing.energy_price[t] * self.fleet.pue[t]
    }

    fn load_power_slope(&self, t: usize) -> f64 {
        self.fleet.pue[t] * self.fleet.util_power_kw / self.fleet.per_server_capacity
    }

    /// Demand-satisfaction equalities, one per slot.
    fn push_demand_rows(&self, blocks: &mut ConicBlocks) {
        for t in 0..self.layout.tau {
            let entries: Vec<(usize, f64)> = (0..=self.d_max)
                .filter_map(|d| self.layout.eta_col[t][d].map(|c| (c, 1.0)))
                .collect();
            blocks.push_row(entries, self.demand.requests[t]);
        }
    }

    fn push_eta_nonneg(&self, blocks: &mut ConicBlocks) {
        for col in 0..self.layout.eta_vars.len() {
            blocks.push_row([(col, -1.0)], 0.0);
        }
    }

    fn push_capacity_rows(&self, blocks: &mut ConicBlocks) {
        let cap = self.fleet.capacity();
        for t in 0..self.layout.tau {
            let entries: Vec<(usize, f64)> =
                self.landing_cols(t).into_iter().map(|c| (c, 1.0)).collect();
            blocks.push_row(entries, cap);
        }
    }

    fn push_deferral_cap_rows(&self, blocks: &mut ConicBlocks) {
        for &t in &self.active_slots {
            let entries: Vec<(usize, f64)> =
                self.deferral_cols(t).into_iter().map(|c| (c, 1.0)).collect();
            blocks.push_row(entries, self.demand.elastic_volume(t));
        }
    }

    /// The profit-neutrality second-order cone. With `u` the profit slack
    /// `baseline - c0 - l'x`, rows are `[u + 1/2; u - 1/2; sqrt(2 w_t) q_t]`,
    /// so cone membership is exactly `sum_t w_t q_t^2 <= u`.
    fn push_profit_cone(
        &self,
        blocks: &mut ConicBlocks,
        profit_linear: &[f64],
        baseline_minus_const: f64,
    ) {
        let dense: Vec<(usize, f64)> = profit_linear
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(c, &v)| (c, v))
            .collect();
        blocks.push_row(dense.clone(), baseline_minus_const + 0.5);
        blocks.push_row(dense, baseline_minus_const - 0.5);
        for (i, &t) in self.active_slots.iter().enumerate() {
            let coef = -(2.0 * self.reward_weight[i]).sqrt();
            let entries: Vec<(usize, f64)> = self
                .deferral_cols(t)
                .into_iter()
                .map(|c| (c, coef))
                .collect();
            blocks.push_row(entries, 0.0);
        }
        blocks.soc_dim = 2 + self.active_slots.len();
    }

    /// Reward floor coefficients: `Lb[t]` on every deferral column.
    fn add_reward_floor(&self, target: &mut [f64]) {
        for (col, &(t, d)) in self.layout.eta_vars.iter().enumerate() {
            if d >= 1 {
                target[col] += self.demand.reward_floor[t];
            }
        }
    }

    fn tie_break(&self, objective: &mut [f64]) {
        for (col, &(_, d)) in self.layout.eta_vars.iter().enumerate() {
            if d >= 1 {
                objective[col] += TIE_BREAK_WEIGHT;
            }
        }
    }
}

/// Deferral-only program: minimize the two-part tariff over schedules.
pub fn build_base_program(
    demand: &DemandInput,
    fleet: &FleetModel,
    billing: &BillingModel,
    d_max: usize,
) -> Result<ProgramSpec> {
    check_inputs(demand, fleet, billing)?;
    let baseline = baseline_cost(demand, fleet, billing)?;
    let b = Builder::layout(demand, fleet, billing, d_max, Mode::Base);
    let lay = &b.layout;
    let n = lay.n;

    let mut cost_linear = vec![0.0; n];
    for (col, &(t, d)) in lay.eta_vars.iter().enumerate() {
        cost_linear[col] = b.energy_rate(t + d) * fleet.util_power_kw / fleet.per_server_capacity;
    }
    for (j, w) in billing.windows.iter().enumerate() {
        cost_linear[lay.peak + j] = w.price_per_kw;
    }
    let cost_const: f64 = (0..lay.tau)
        .map(|t| b.energy_rate(t) * f64::from(fleet.servers) * fleet.idle_power_kw)
        .sum();

    let mut blocks = ConicBlocks::default();
    b.push_demand_rows(&mut blocks);
    blocks.n_eq = blocks.rhs.len();

    b.push_eta_nonneg(&mut blocks);
    b.push_capacity_rows(&mut blocks);
    b.push_deferral_cap_rows(&mut blocks);
    // peak epigraph: P[t] <= z_j on each window
    let idle_kw = f64::from(fleet.servers) * fleet.idle_power_kw;
    for (j, w) in billing.windows.iter().enumerate() {
        for &t in &w.slots {
            let slope = b.load_power_slope(t);
            let mut entries: Vec<(usize, f64)> = b
                .landing_cols(t)
                .into_iter()
                .map(|c| (c, slope))
                .collect();
            entries.push((lay.peak + j, -1.0));
            blocks.push_row(entries, -fleet.pue[t] * idle_kw);
        }
    }
    blocks.n_ineq = blocks.rhs.len() - blocks.n_eq;

    let mut profit_linear = cost_linear.clone();
    b.add_reward_floor(&mut profit_linear);
    b.push_profit_cone(&mut blocks, &profit_linear, baseline.total() - cost_const);

    let mut objective = cost_linear.clone();
    b.tie_break(&mut objective);

    Ok(ProgramSpec {
        mode: Mode::Base,
        demand: demand.clone(),
        fleet: fleet.clone(),
        billing: billing.clone(),
        d_max,
        shutdown: None,
        green: None,
        baseline,
        active_slots: b.active_slots,
        layout: b.layout,
        objective,
        cost_linear,
        cost_const,
        blocks,
    })
}

/// Shutdown program: deferral plus relaxed on/off server decisions.
pub fn build_shutdown_program(
    demand: &DemandInput,
    fleet: &FleetModel,
    billing: &BillingModel,
    d_max: usize,
    params: ShutdownParams,
) -> Result<ProgramSpec> {
    check_inputs(demand, fleet, billing)?;
    params.validate(fleet)?;
    let baseline = baseline_cost(demand, fleet, billing)?;
    let b = Builder::layout(demand, fleet, billing, d_max, Mode::Shutdown);
    let lay = &b.layout;
    let n = lay.n;
    let (m0, on0, off0) = (
        lay.running.unwrap(),
        lay.turn_on.unwrap(),
        lay.turn_off.unwrap(),
    );
    let t_h = billing.slot_hours;

    let mut cost_linear = vec![0.0; n];
    for (col, &(t, d)) in lay.eta_vars.iter().enumerate() {
        cost_linear[col] = b.energy_rate(t + d) * fleet.util_power_kw / fleet.per_server_capacity;
    }
    for t in 0..lay.tau {
        cost_linear[m0 + t] = b.energy_rate(t) * fleet.idle_power_kw;
        let toggle_energy = billing.energy_price[t] * fleet.pue[t] * params.toggle_energy_kwh;
        cost_linear[on0 + t] = toggle_energy;
        cost_linear[off0 + t] = toggle_energy;
    }
    for (j, w) in billing.windows.iter().enumerate() {
        cost_linear[lay.peak + j] = w.price_per_kw;
    }
    let cost_const = 0.0;

    let mut blocks = ConicBlocks::default();
    b.push_demand_rows(&mut blocks);
    // running-count continuity: m[t] - m[t-1] - on[t] + off[t] = 0
    for t in 0..lay.tau {
        let mut entries = vec![(m0 + t, 1.0), (on0 + t, -1.0), (off0 + t, 1.0)];
        let rhs = if t == 0 {
            params.initial_on
        } else {
            entries.push((m0 + t - 1, -1.0));
            0.0
        };
        blocks.push_row(entries, rhs);
    }
    blocks.n_eq = blocks.rhs.len();

    b.push_eta_nonneg(&mut blocks);
    for t in 0..lay.tau {
        blocks.push_row([(on0 + t, -1.0)], 0.0);
        blocks.push_row([(off0 + t, -1.0)], 0.0);
    }
    if let Some(limit) = params.max_toggle {
        for t in 0..lay.tau {
            blocks.push_row([(on0 + t, 1.0)], limit);
            blocks.push_row([(off0 + t, 1.0)], limit);
        }
    }
    // servers must host the scheduled load: lhat[t]/nu - m[t] <= 0
    for t in 0..lay.tau {
        let mut entries: Vec<(usize, f64)> = b
            .landing_cols(t)
            .into_iter()
            .map(|c| (c, 1.0 / fleet.per_server_capacity))
            .collect();
        entries.push((m0 + t, -1.0));
        blocks.push_row(entries, 0.0);
    }
    // and stay within the fleet: m[t] <= N
    for t in 0..lay.tau {
        blocks.push_row([(m0 + t, 1.0)], f64::from(fleet.servers));
    }
    b.push_deferral_cap_rows(&mut blocks);
    // peak epigraph: P_s[t] + pue[t] P_o[t]/T <= z_j
    for (j, w) in billing.windows.iter().enumerate() {
        for &t in &w.slots {
            let slope = b.load_power_slope(t);
            let mut entries: Vec<(usize, f64)> = b
                .landing_cols(t)
                .into_iter()
                .map(|c| (c, slope))
                .collect();
            entries.push((m0 + t, fleet.pue[t] * fleet.idle_power_kw));
            let toggle_kw = fleet.pue[t] * params.toggle_energy_kwh / t_h;
            entries.push((on0 + t, toggle_kw));
            entries.push((off0 + t, toggle_kw));
            entries.push((lay.peak + j, -1.0));
            blocks.push_row(entries, 0.0);
        }
    }
    blocks.n_ineq = blocks.rhs.len() - blocks.n_eq;

    let mut profit_linear = cost_linear.clone();
    b.add_reward_floor(&mut profit_linear);
    for t in 0..lay.tau {
        profit_linear[on0 + t] += params.wear_cost_usd;
    }
    b.push_profit_cone(&mut blocks, &profit_linear, baseline.total() - cost_const);

    let mut objective = cost_linear.clone();
    b.tie_break(&mut objective);

    Ok(ProgramSpec {
        mode: Mode::Shutdown,
        demand: demand.clone(),
        fleet: fleet.clone(),
        billing: billing.clone(),
        d_max,
        shutdown: Some(params),
        green: None,
        baseline,
        active_slots: b.active_slots,
        layout: b.layout,
        objective,
        cost_linear,
        cost_const,
        blocks,
    })
}

/// Renewable program: deferral with on-site generation offsetting both
/// tariff parts through positive-part surpluses.
pub fn build_renewable_program(
    demand: &DemandInput,
    fleet: &FleetModel,
    billing: &BillingModel,
    d_max: usize,
    green: RenewableProfile,
) -> Result<ProgramSpec> {
    check_inputs(demand, fleet, billing)?;
    if green.tau() != billing.tau() {
        return Err(Error::DimensionMismatch {
            what: "renewable horizon",
            expected: billing.tau(),
            actual: green.tau(),
        });
    }
    let baseline = baseline_cost(demand, fleet, billing)?;
    let b = Builder::layout(demand, fleet, billing, d_max, Mode::Renewable);
    let lay = &b.layout;
    let n = lay.n;
    let s0 = lay.surplus.unwrap();
    let t_h = billing.slot_hours;
    let idle_kw = f64::from(fleet.servers) * fleet.idle_power_kw;

    let mut cost_linear = vec![0.0; n];
    for t in 0..lay.tau {
        cost_linear[s0 + t] = billing.energy_price[t];
    }
    for (j, w) in billing.windows.iter().enumerate() {
        cost_linear[lay.peak + j] = w.price_per_kw;
    }
    let cost_const = 0.0;

    let mut blocks = ConicBlocks::default();
    b.push_demand_rows(&mut blocks);
    blocks.n_eq = blocks.rhs.len();

    b.push_eta_nonneg(&mut blocks);
    b.push_capacity_rows(&mut blocks);
    b.push_deferral_cap_rows(&mut blocks);
    // energy surplus: s[t] >= T P[t] - G[t] and s[t] >= 0
    for t in 0..lay.tau {
        let slope = t_h * b.load_power_slope(t);
        let mut entries: Vec<(usize, f64)> = b
            .landing_cols(t)
            .into_iter()
            .map(|c| (c, slope))
            .collect();
        entries.push((s0 + t, -1.0));
        blocks.push_row(
            entries,
            green.energy_kwh[t] - t_h * fleet.pue[t] * idle_kw,
        );
        blocks.push_row([(s0 + t, -1.0)], 0.0);
    }
    // billed peak: z_j >= P[t] - G[t]/T on the window and z_j >= 0
    for (j, w) in billing.windows.iter().enumerate() {
        for &t in &w.slots {
            let slope = b.load_power_slope(t);
            let mut entries: Vec<(usize, f64)> = b
                .landing_cols(t)
                .into_iter()
                .map(|c| (c, slope))
                .collect();
            entries.push((lay.peak + j, -1.0));
            blocks.push_row(
                entries,
                green.energy_kwh[t] / t_h - fleet.pue[t] * idle_kw,
            );
        }
        blocks.push_row([(lay.peak + j, -1.0)], 0.0);
    }
    blocks.n_ineq = blocks.rhs.len() - blocks.n_eq;

    let mut profit_linear = cost_linear.clone();
    b.add_reward_floor(&mut profit_linear);
    b.push_profit_cone(&mut blocks, &profit_linear, baseline.total() - cost_const);

    let mut objective = cost_linear.clone();
    b.tie_break(&mut objective);

    Ok(ProgramSpec {
        mode: Mode::Renewable,
        demand: demand.clone(),
        fleet: fleet.clone(),
        billing: billing.clone(),
        d_max,
        shutdown: None,
        green: Some(green),
        baseline,
        active_slots: b.active_slots,
        layout: b.layout,
        objective,
        cost_linear,
        cost_const,
        blocks,
    })
}
