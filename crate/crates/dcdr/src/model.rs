//! Physical and billing model of a data center over one billing cycle.
//!
//! The cycle is divided into `tau` slots of `slot_hours` hours. Aggregate
//! requests are served by a homogeneous fleet; the utility bills an energy
//! charge on per-slot consumption plus a demand charge on the peak average
//! load inside each tariff window.

use crate::error::{Error, Result};

/// Relative slack applied to capacity checks so that solutions carrying
/// solver-level residuals are not rejected.
pub(crate) const CAPACITY_SLACK: f64 = 1e-6;

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            what,
            detail: format!("non-finite value {v} at slot {i}"),
        });
    }
    Ok(())
}

fn check_non_negative(what: &'static str, values: &[f64]) -> Result<()> {
    check_finite(what, values)?;
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::InvalidParameter {
            what,
            detail: format!("negative value {v} at slot {i}"),
        });
    }
    Ok(())
}

/// One demand-charge window: a set of slots billed on their peak average load.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandWindow {
    /// Slots (0-based) covered by this window. Non-empty.
    pub slots: Vec<usize>,
    /// Demand price in $/KW applied to the window peak.
    pub price_per_kw: f64,
}

impl DemandWindow {
    pub fn new(slots: Vec<usize>, price_per_kw: f64) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidParameter {
                what: "demand window",
                detail: "empty slot set".into(),
            });
        }
        if !price_per_kw.is_finite() || price_per_kw < 0.0 {
            return Err(Error::InvalidParameter {
                what: "demand window",
                detail: format!("price {price_per_kw} must be finite and non-negative"),
            });
        }
        Ok(Self { slots, price_per_kw })
    }

    /// Window covering every slot of a `tau`-slot cycle.
    pub fn full_cycle(tau: usize, price_per_kw: f64) -> Result<Self> {
        Self::new((0..tau).collect(), price_per_kw)
    }
}

/// Two-part electricity tariff over one billing cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct BillingModel {
    /// Slot length in hours.
    pub slot_hours: f64,
    /// Energy price per slot in $/KWh; its length fixes `tau`.
    pub energy_price: Vec<f64>,
    /// Demand-charge windows.
    pub windows: Vec<DemandWindow>,
}

impl BillingModel {
    pub fn new(
        slot_hours: f64,
        energy_price: Vec<f64>,
        windows: Vec<DemandWindow>,
    ) -> Result<Self> {
        if energy_price.is_empty() {
            return Err(Error::InvalidParameter {
                what: "billing model",
                detail: "horizon must contain at least one slot".into(),
            });
        }
        if !slot_hours.is_finite() || slot_hours <= 0.0 {
            return Err(Error::InvalidParameter {
                what: "billing model",
                detail: format!("slot length {slot_hours} must be positive"),
            });
        }
        check_non_negative("energy price", &energy_price)?;
        let tau = energy_price.len();
        for (j, w) in windows.iter().enumerate() {
            if let Some(&s) = w.slots.iter().find(|&&s| s >= tau) {
                return Err(Error::InvalidParameter {
                    what: "demand window",
                    detail: format!("window {j} references slot {s} outside 0..{tau}"),
                });
            }
        }
        Ok(Self {
            slot_hours,
            energy_price,
            windows,
        })
    }

    /// Number of slots in the billing cycle.
    pub fn tau(&self) -> usize {
        self.energy_price.len()
    }
}

/// Homogeneous server fleet and facility overhead.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetModel {
    /// Available servers.
    pub servers: u32,
    /// Power drawn by an idle server, KW.
    pub idle_power_kw: f64,
    /// Additional power at full utilization, KW per server.
    pub util_power_kw: f64,
    /// Requests a fully utilized server processes per slot.
    pub per_server_capacity: f64,
    /// Power usage effectiveness per slot (total facility power / IT power).
    pub pue: Vec<f64>,
}

impl FleetModel {
    pub fn new(
        servers: u32,
        idle_power_kw: f64,
        util_power_kw: f64,
        per_server_capacity: f64,
        pue: Vec<f64>,
    ) -> Result<Self> {
        if servers == 0 {
            return Err(Error::InvalidParameter {
                what: "fleet",
                detail: "server count must be at least 1".into(),
            });
        }
        for (name, v) in [
            ("idle power", idle_power_kw),
            ("utilization power", util_power_kw),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter {
                    what: "fleet",
                    detail: format!("{name} {v} must be finite and non-negative"),
                });
            }
        }
        if !per_server_capacity.is_finite() || per_server_capacity <= 0.0 {
            return Err(Error::InvalidParameter {
                what: "fleet",
                detail: format!("per-server capacity {per_server_capacity} must be positive"),
            });
        }
        check_finite("pue", &pue)?;
        if let Some((i, v)) = pue.iter().enumerate().find(|(_, v)| **v < 1.0) {
            return Err(Error::InvalidParameter {
                what: "pue",
                detail: format!("value {v} at slot {i} is below 1"),
            });
        }
        Ok(Self {
            servers,
            idle_power_kw,
            util_power_kw,
            per_server_capacity,
            pue,
        })
    }

    /// Fleet with the same PUE in every slot.
    pub fn with_constant_pue(
        servers: u32,
        idle_power_kw: f64,
        util_power_kw: f64,
        per_server_capacity: f64,
        pue: f64,
        tau: usize,
    ) -> Result<Self> {
        Self::new(
            servers,
            idle_power_kw,
            util_power_kw,
            per_server_capacity,
            vec![pue; tau],
        )
    }

    /// Requests the whole fleet can absorb in one slot.
    pub fn capacity(&self) -> f64 {
        f64::from(self.servers) * self.per_server_capacity
    }

    pub fn tau(&self) -> usize {
        self.pue.len()
    }
}

/// Aggregate demand and the utility-loss band of the elastic population.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandInput {
    /// Aggregate requests generated per slot.
    pub requests: Vec<f64>,
    /// Fraction of requests issued by elastic users, in [0, 1].
    pub elastic_fraction: Vec<f64>,
    /// Lower bound `Lb[t]` of the per-request utility-loss factor, $.
    pub reward_floor: Vec<f64>,
    /// Upper bound `Ub[t]` of the per-request utility-loss factor, $.
    pub reward_ceiling: Vec<f64>,
}

impl DemandInput {
    pub fn new(
        requests: Vec<f64>,
        elastic_fraction: Vec<f64>,
        reward_floor: Vec<f64>,
        reward_ceiling: Vec<f64>,
    ) -> Result<Self> {
        let tau = requests.len();
        if tau == 0 {
            return Err(Error::InvalidParameter {
                what: "demand",
                detail: "request series is empty".into(),
            });
        }
        for (what, series) in [
            ("elastic fraction", &elastic_fraction),
            ("reward floor", &reward_floor),
            ("reward ceiling", &reward_ceiling),
        ] {
            if series.len() != tau {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: tau,
                    actual: series.len(),
                });
            }
        }
        check_non_negative("requests", &requests)?;
        check_non_negative("elastic fraction", &elastic_fraction)?;
        if let Some((i, v)) = elastic_fraction.iter().enumerate().find(|(_, v)| **v > 1.0) {
            return Err(Error::InvalidParameter {
                what: "elastic fraction",
                detail: format!("value {v} at slot {i} exceeds 1"),
            });
        }
        check_non_negative("reward floor", &reward_floor)?;
        check_finite("reward ceiling", &reward_ceiling)?;
        for (i, (lb, ub)) in reward_floor.iter().zip(&reward_ceiling).enumerate() {
            if lb >= ub {
                return Err(Error::InvalidParameter {
                    what: "reward band",
                    detail: format!("floor {lb} must be strictly below ceiling {ub} at slot {i}"),
                });
            }
        }
        Ok(Self {
            requests,
            elastic_fraction,
            reward_floor,
            reward_ceiling,
        })
    }

    /// Demand with slot-independent elasticity and reward band.
    pub fn with_uniform_band(
        requests: Vec<f64>,
        elastic_fraction: f64,
        reward_floor: f64,
        reward_ceiling: f64,
    ) -> Result<Self> {
        let tau = requests.len();
        Self::new(
            requests,
            vec![elastic_fraction; tau],
            vec![reward_floor; tau],
            vec![reward_ceiling; tau],
        )
    }

    pub fn tau(&self) -> usize {
        self.requests.len()
    }

    /// Requests at slot `t` that elastic users could in principle defer.
    pub fn elastic_volume(&self, t: usize) -> f64 {
        self.elastic_fraction[t] * self.requests[t]
    }
}

/// Assignment of every request to a service slot at most `d_max` slots after
/// its arrival. `eta[d][t]` counts requests generated at slot `t` and served
/// at `t + d`; entries that would spill past the cycle end are identically 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DeferralSchedule {
    d_max: usize,
    eta: Vec<Vec<f64>>,
}

impl DeferralSchedule {
    pub fn new(d_max: usize, eta: Vec<Vec<f64>>) -> Result<Self> {
        if eta.len() != d_max + 1 {
            return Err(Error::DimensionMismatch {
                what: "deferral rows",
                expected: d_max + 1,
                actual: eta.len(),
            });
        }
        let tau = eta[0].len();
        if tau == 0 {
            return Err(Error::InvalidParameter {
                what: "schedule",
                detail: "horizon must contain at least one slot".into(),
            });
        }
        for (d, row) in eta.iter().enumerate() {
            if row.len() != tau {
                return Err(Error::DimensionMismatch {
                    what: "deferral row",
                    expected: tau,
                    actual: row.len(),
                });
            }
            for (t, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidParameter {
                        what: "schedule",
                        detail: format!("eta[{d}][{t}] = {v} must be finite and non-negative"),
                    });
                }
                if t + d >= tau && v != 0.0 {
                    return Err(Error::InvalidParameter {
                        what: "schedule",
                        detail: format!(
                            "eta[{d}][{t}] = {v} would serve past the end of the cycle"
                        ),
                    });
                }
            }
        }
        Ok(Self { d_max, eta })
    }

    /// Schedule that serves every request in its arrival slot.
    pub fn identity(requests: &[f64], d_max: usize) -> Result<Self> {
        let tau = requests.len();
        let mut eta = vec![vec![0.0; tau]; d_max + 1];
        eta[0] = requests.to_vec();
        Self::new(d_max, eta)
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn tau(&self) -> usize {
        self.eta[0].len()
    }

    /// Requests generated at slot `t` and deferred by `d` slots.
    pub fn eta(&self, d: usize, t: usize) -> f64 {
        self.eta[d][t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.eta
    }

    /// Deferred volume per arrival slot: `q[t] = sum_{d>=1} eta[d][t]`.
    pub fn deferred_per_slot(&self) -> Vec<f64> {
        let tau = self.tau();
        let mut q = vec![0.0; tau];
        for row in self.eta.iter().skip(1) {
            for (t, v) in row.iter().enumerate() {
                q[t] += v;
            }
        }
        q
    }

    pub fn total_deferred(&self) -> f64 {
        self.deferred_per_slot().iter().sum()
    }

    /// Checks that every arrival is scheduled exactly once (within `tol`,
    /// absolute per slot) against the demand it claims to serve.
    pub fn check_satisfies(&self, demand: &DemandInput, tol: f64) -> Result<()> {
        if demand.tau() != self.tau() {
            return Err(Error::DimensionMismatch {
                what: "schedule horizon",
                expected: demand.tau(),
                actual: self.tau(),
            });
        }
        for t in 0..self.tau() {
            let served: f64 = self.eta.iter().map(|row| row[t]).sum();
            if (served - demand.requests[t]).abs() > tol {
                return Err(Error::InvalidParameter {
                    what: "schedule",
                    detail: format!(
                        "slot {t} schedules {served} of {} requests",
                        demand.requests[t]
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Per-slot average electric load of the facility, KW.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    pub kw: Vec<f64>,
}

impl PowerProfile {
    pub fn peak(&self) -> f64 {
        self.kw.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn len(&self) -> usize {
        self.kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kw.is_empty()
    }
}

/// Itemized cycle cost. `baseline` records the reference cost the breakdown
/// is compared against; plain tariff evaluations are their own reference.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    /// Energy charge, $.
    pub energy: f64,
    /// Demand charge per window, $.
    pub demand: Vec<f64>,
    /// Rewards paid to users, $.
    pub reward: f64,
    /// Server wear-and-tear, $.
    pub wear: f64,
    /// Reference cost, $.
    pub baseline: f64,
}

impl CostBreakdown {
    pub fn demand_total(&self) -> f64 {
        self.demand.iter().sum()
    }

    /// Energy plus demand charges.
    pub fn electricity(&self) -> f64 {
        self.energy + self.demand_total()
    }

    /// Everything the operator pays: electricity, rewards, and wear.
    pub fn total(&self) -> f64 {
        self.electricity() + self.reward + self.wear
    }

    /// Money kept relative to the reference; non-negative when profit
    /// neutrality holds.
    pub fn profit_delta(&self) -> f64 {
        self.baseline - self.total()
    }
}

/// Aggregate requests served per slot: `lhat[t] = sum_d eta[d][t-d]`.
pub fn scheduled_load(schedule: &DeferralSchedule, demand: &DemandInput) -> Result<Vec<f64>> {
    let tau = demand.tau();
    if schedule.tau() != tau {
        return Err(Error::DimensionMismatch {
            what: "schedule horizon",
            expected: tau,
            actual: schedule.tau(),
        });
    }
    let mut lhat = vec![0.0; tau];
    for (d, row) in schedule.rows().iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            if v != 0.0 {
                lhat[t + d] += v;
            }
        }
    }
    Ok(lhat)
}

/// Average CPU utilization per slot under equal dispatch over all servers.
///
/// Errors when the load exceeds fleet capacity beyond [`CAPACITY_SLACK`].
pub fn utilization(lambda_hat: &[f64], fleet: &FleetModel) -> Result<Vec<f64>> {
    if lambda_hat.len() != fleet.tau() {
        return Err(Error::DimensionMismatch {
            what: "load horizon",
            expected: fleet.tau(),
            actual: lambda_hat.len(),
        });
    }
    let cap = fleet.capacity();
    let mut u = Vec::with_capacity(lambda_hat.len());
    for (t, &load) in lambda_hat.iter().enumerate() {
        if load > cap * (1.0 + CAPACITY_SLACK) {
            return Err(Error::CapacityExceeded {
                slot: t,
                load_requests: load,
                capacity_requests: cap,
            });
        }
        u.push(load / cap);
    }
    Ok(u)
}

/// Facility power per slot with all servers on:
/// `P[t] = pue[t] * (N * e0 + (lhat[t] / nu) * e1)`.
pub fn power_profile(lambda_hat: &[f64], fleet: &FleetModel) -> Result<PowerProfile> {
    let u = utilization(lambda_hat, fleet)?;
    let n = f64::from(fleet.servers);
    let kw = u
        .iter()
        .zip(&fleet.pue)
        .map(|(&u_t, &pue)| pue * n * (fleet.idle_power_kw + u_t * fleet.util_power_kw))
        .collect();
    Ok(PowerProfile { kw })
}

/// Two-part tariff: energy charge plus the per-window peak demand charge.
pub fn electricity_cost(power: &PowerProfile, billing: &BillingModel) -> Result<CostBreakdown> {
    if power.len() != billing.tau() {
        return Err(Error::DimensionMismatch {
            what: "power horizon",
            expected: billing.tau(),
            actual: power.len(),
        });
    }
    let energy: f64 = power
        .kw
        .iter()
        .zip(&billing.energy_price)
        .map(|(&p, &a)| billing.slot_hours * a * p)
        .sum();
    let demand: Vec<f64> = billing
        .windows
        .iter()
        .map(|w| {
            let peak = w
                .slots
                .iter()
                .map(|&t| power.kw[t])
                .fold(f64::NEG_INFINITY, f64::max);
            w.price_per_kw * peak
        })
        .collect();
    let electricity = energy + demand.iter().sum::<f64>();
    Ok(CostBreakdown {
        energy,
        demand,
        reward: 0.0,
        wear: 0.0,
        baseline: electricity,
    })
}

/// Cycle cost with no demand response: the identity schedule, no rewards,
/// no wear.
pub fn baseline_cost(
    demand: &DemandInput,
    fleet: &FleetModel,
    billing: &BillingModel,
) -> Result<CostBreakdown> {
    let power = power_profile(&demand.requests, fleet)?;
    electricity_cost(&power, billing)
}

/// Revenue from aggregate demand at per-request prices `delta`.
///
/// Demand response leaves this untouched; it is reported only.
pub fn revenue(demand: &DemandInput, delta: &[f64]) -> Result<f64> {
    if delta.len() != demand.tau() {
        return Err(Error::DimensionMismatch {
            what: "price horizon",
            expected: demand.tau(),
            actual: delta.len(),
        });
    }
    check_non_negative("unit price", delta)?;
    Ok(demand
        .requests
        .iter()
        .zip(delta)
        .map(|(&l, &d)| l * d)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn fleet_2x20(pue: f64, tau: usize) -> FleetModel {
        FleetModel::with_constant_pue(2, 0.1, 0.1, 20.0, pue, tau).unwrap()
    }

    fn demand_plain(requests: Vec<f64>) -> DemandInput {
        DemandInput::with_uniform_band(requests, 0.5, 1e-3, 1e-2).unwrap()
    }

    #[test]
    fn identity_schedule_is_the_no_deferral_case() {
        let lam = [10.0, 0.0, 3.0];
        let demand = demand_plain(lam.to_vec());
        let schedule = DeferralSchedule::identity(&lam, 0).unwrap();
        let lhat = scheduled_load(&schedule, &demand).unwrap();
        assert_eq!(lhat, lam.to_vec());
    }

    #[test]
    fn single_block_shifts_by_one_slot() {
        let demand = demand_plain(vec![10.0, 0.0, 0.0]);
        let mut eta = vec![vec![0.0; 3]; 2];
        eta[1][0] = 10.0;
        let schedule = DeferralSchedule::new(1, eta).unwrap();
        let lhat = scheduled_load(&schedule, &demand).unwrap();
        assert_eq!(lhat, vec![0.0, 10.0, 0.0]);
    }

    #[test]
    fn scheduled_load_matches_hand_convolution() {
        // tau=4, D=2: arrivals (8,4,0,0) split as eta0[0]=2, eta1[0]=3,
        // eta2[0]=3, eta0[1]=4. Expected landing series computed by hand.
        let demand = demand_plain(vec![8.0, 4.0, 0.0, 0.0]);
        let mut eta = vec![vec![0.0; 4]; 3];
        eta[0][0] = 2.0;
        eta[1][0] = 3.0;
        eta[2][0] = 3.0;
        eta[0][1] = 4.0;
        let schedule = DeferralSchedule::new(2, eta).unwrap();
        let lhat = scheduled_load(&schedule, &demand).unwrap();
        assert_eq!(lhat, vec![2.0, 7.0, 3.0, 0.0]);
        schedule.check_satisfies(&demand, 1e-12).unwrap();
    }

    #[test]
    fn schedule_rejects_spill_past_cycle_end() {
        let mut eta = vec![vec![0.0; 3]; 2];
        eta[1][2] = 1.0; // would land at slot 3 of a 3-slot cycle
        let err = DeferralSchedule::new(1, eta).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }

    #[test]
    fn utilization_examples() {
        let fleet = fleet_2x20(1.2, 1);
        assert_eq!(utilization(&[0.0], &fleet).unwrap(), vec![0.0]);
        assert_eq!(utilization(&[40.0], &fleet).unwrap(), vec![1.0]);
        assert_eq!(utilization(&[20.0], &fleet).unwrap(), vec![0.5]);
    }

    #[test]
    fn utilization_rejects_overload() {
        let fleet = fleet_2x20(1.2, 1);
        let err = utilization(&[41.0], &fleet).unwrap_err();
        assert!(matches!(err, Error::CapacityExceeded { slot: 0, .. }));
    }

    #[test]
    fn power_examples() {
        let fleet = fleet_2x20(1.2, 1);
        let p_idle = power_profile(&[0.0], &fleet).unwrap();
        assert_relative_eq!(p_idle.kw[0], 0.24, max_relative = 1e-12);
        let p_full = power_profile(&[40.0], &fleet).unwrap();
        assert_relative_eq!(p_full.kw[0], 0.48, max_relative = 1e-12);
        let p_half = power_profile(&[20.0], &fleet).unwrap();
        assert_relative_eq!(p_half.kw[0], 0.36, max_relative = 1e-12);
    }

    #[test]
    fn two_slot_tariff_arithmetic() {
        let billing = BillingModel::new(
            1.0,
            vec![0.05, 0.05],
            vec![DemandWindow::full_cycle(2, 15.59).unwrap()],
        )
        .unwrap();
        let cost = electricity_cost(
            &PowerProfile {
                kw: vec![1.0, 2.0],
            },
            &billing,
        )
        .unwrap();
        assert_relative_eq!(cost.energy, 0.15, max_relative = 1e-12);
        assert_relative_eq!(cost.demand[0], 31.18, max_relative = 1e-12);
        assert_relative_eq!(cost.total(), 31.33, max_relative = 1e-12);
    }

    #[test]
    fn zero_demand_price_leaves_energy_only() {
        let billing = BillingModel::new(
            1.0,
            vec![0.05, 0.05],
            vec![DemandWindow::full_cycle(2, 0.0).unwrap()],
        )
        .unwrap();
        let cost = electricity_cost(
            &PowerProfile {
                kw: vec![1.0, 2.0],
            },
            &billing,
        )
        .unwrap();
        assert_eq!(cost.demand[0], 0.0);
        assert_relative_eq!(cost.total(), cost.energy, max_relative = 1e-15);
    }

    #[test]
    fn day_scale_tariff_matches_summation_oracle() {
        // P[t] = 100 + 50 sin(2 pi t / 24), t = 1..24, alpha = 0.05207,
        // one full-cycle window at 15.59 $/KW. Frozen from an independent
        // summation of the tariff terms.
        let tau = 24;
        let kw: Vec<f64> = (1..=tau)
            .map(|t| 100.0 + 50.0 * (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin())
            .collect();
        let billing = BillingModel::new(
            1.0,
            vec![0.05207; tau],
            vec![DemandWindow::full_cycle(tau, 15.59).unwrap()],
        )
        .unwrap();
        let cost = electricity_cost(&PowerProfile { kw }, &billing).unwrap();
        assert_relative_eq!(cost.energy, 124.968, max_relative = 1e-12);
        assert_relative_eq!(cost.demand[0], 2338.5, max_relative = 1e-12);
        assert_relative_eq!(cost.total(), 2463.468, max_relative = 1e-12);
    }

    #[test]
    fn empty_window_rejected_at_construction() {
        assert!(DemandWindow::new(vec![], 1.0).is_err());
    }

    #[test]
    fn baseline_of_idle_demand_is_the_idle_power_floor() {
        let tau = 24;
        let fleet = FleetModel::with_constant_pue(100, 0.1, 0.1, 20.0, 1.2, tau).unwrap();
        let billing = BillingModel::new(
            1.0,
            vec![0.05207; tau],
            vec![DemandWindow::full_cycle(tau, 15.59).unwrap()],
        )
        .unwrap();
        let demand = demand_plain(vec![0.0; tau]);
        let cost = baseline_cost(&demand, &fleet, &billing).unwrap();
        // 24 * alpha * pue * N * e0 and beta * pue * N * e0
        assert_relative_eq!(cost.energy, 14.99616, max_relative = 1e-12);
        assert_relative_eq!(cost.demand[0], 187.08, max_relative = 1e-12);
    }

    #[test]
    fn baseline_of_diurnal_demand_matches_summation_oracle() {
        // lam[t] = 800 + 600 sin(2 pi t / 24) on the case-study fleet;
        // frozen from an independent evaluation of the tariff sums.
        let tau = 24;
        let lam: Vec<f64> = (1..=tau)
            .map(|t| 800.0 + 600.0 * (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin())
            .collect();
        let fleet = FleetModel::with_constant_pue(100, 0.1, 0.1, 20.0, 1.2, tau).unwrap();
        let billing = BillingModel::new(
            1.0,
            vec![0.05207; tau],
            vec![DemandWindow::full_cycle(tau, 15.59).unwrap()],
        )
        .unwrap();
        let cost = baseline_cost(&demand_plain(lam), &fleet, &billing).unwrap();
        assert_relative_eq!(cost.energy, 20.994624, max_relative = 1e-12);
        assert_relative_eq!(cost.demand[0], 318.036, max_relative = 1e-12);
        assert_relative_eq!(cost.total(), 339.030624, max_relative = 1e-12);
    }

    #[test]
    fn baseline_equals_identity_schedule_cost_bit_for_bit() {
        let tau = 12;
        let lam: Vec<f64> = (0..tau).map(|t| 100.0 + 17.0 * t as f64).collect();
        let fleet = FleetModel::with_constant_pue(30, 0.1, 0.1, 20.0, 1.2, tau).unwrap();
        let billing = BillingModel::new(
            1.0,
            vec![0.05207; tau],
            vec![DemandWindow::full_cycle(tau, 15.59).unwrap()],
        )
        .unwrap();
        let demand = demand_plain(lam.clone());
        let baseline = baseline_cost(&demand, &fleet, &billing).unwrap();

        let schedule = DeferralSchedule::identity(&lam, 3).unwrap();
        let lhat = scheduled_load(&schedule, &demand).unwrap();
        let via_schedule =
            electricity_cost(&power_profile(&lhat, &fleet).unwrap(), &billing).unwrap();
        assert_eq!(baseline, via_schedule);
    }

    #[test]
    fn revenue_examples() {
        let demand = demand_plain(vec![10.0, 20.0]);
        assert_eq!(revenue(&demand, &[0.0, 0.0]).unwrap(), 0.0);
        assert_relative_eq!(
            revenue(&demand, &[0.01, 0.01]).unwrap(),
            0.3,
            max_relative = 1e-12
        );
    }

    #[test]
    fn demand_rejects_inverted_band() {
        let err = DemandInput::with_uniform_band(vec![1.0], 0.5, 1e-2, 1e-2).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }

    prop_compose! {
        fn arb_instance()(tau in 2usize..10, d_max in 0usize..4)
            (tau in Just(tau),
             d_max in Just(d_max),
             lam in proptest::collection::vec(0.0f64..500.0, tau),
             weights in proptest::collection::vec(
                 proptest::collection::vec(0.01f64..1.0, 5), tau))
            -> (usize, Vec<f64>, Vec<Vec<f64>>) {
            // split each slot's arrivals over its admissible delays
            let mut eta = vec![vec![0.0; tau]; d_max + 1];
            for t in 0..tau {
                let dmax_t = d_max.min(tau - 1 - t);
                let total: f64 = weights[t][..=dmax_t].iter().sum();
                for d in 0..=dmax_t {
                    eta[d][t] = lam[t] * weights[t][d] / total;
                }
            }
            (d_max, lam, eta)
        }
    }

    proptest! {
        #[test]
        fn conservation_over_random_schedules((d_max, lam, eta) in arb_instance()) {
            let demand = demand_plain(lam.clone());
            let schedule = DeferralSchedule::new(d_max, eta).unwrap();
            let lhat = scheduled_load(&schedule, &demand).unwrap();
            let served: f64 = lhat.iter().sum();
            let arrived: f64 = lam.iter().sum();
            prop_assert!((served - arrived).abs() <= 1e-9 * (1.0 + arrived));
        }

        #[test]
        fn cost_is_monotone_in_power(
            kw in proptest::collection::vec(0.0f64..100.0, 6),
            bump in 0.0f64..50.0,
            slot in 0usize..6,
        ) {
            let billing = BillingModel::new(
                1.0,
                vec![0.04, 0.05, 0.06, 0.05, 0.04, 0.03],
                vec![
                    DemandWindow::new(vec![0, 1, 2], 10.0).unwrap(),
                    DemandWindow::new(vec![3, 4, 5], 4.0).unwrap(),
                ],
            ).unwrap();
            let before = electricity_cost(&PowerProfile { kw: kw.clone() }, &billing).unwrap();
            let mut bumped = kw;
            bumped[slot] += bump;
            let after = electricity_cost(&PowerProfile { kw: bumped }, &billing).unwrap();
            prop_assert!(after.total() >= before.total() - 1e-12);
        }

        #[test]
        fn single_window_demand_charge_is_the_peak(
            kw in proptest::collection::vec(0.0f64..100.0, 8),
        ) {
            let billing = BillingModel::new(
                1.0,
                vec![0.05; 8],
                vec![DemandWindow::full_cycle(8, 15.59).unwrap()],
            ).unwrap();
            let cost = electricity_cost(&PowerProfile { kw: kw.clone() }, &billing).unwrap();
            let peak = kw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((cost.demand[0] - 15.59 * peak).abs() <= 1e-9 * (1.0 + peak));
        }

        #[test]
        fn power_is_affine_in_load(
            load in 0.0f64..750.0,
            delta in 0.1f64..50.0,
            pue in 1.0f64..2.0,
        ) {
            let fleet = FleetModel::with_constant_pue(50, 0.1, 0.1, 20.0, pue, 1).unwrap();
            let p0 = power_profile(&[load], &fleet).unwrap().kw[0];
            let p1 = power_profile(&[load + delta], &fleet).unwrap().kw[0];
            let slope = (p1 - p0) / delta;
            let expected = pue * fleet.util_power_kw / fleet.per_server_capacity;
            prop_assert!((slope - expected).abs() <= 1e-9 * expected);
        }
    }
}
