//! Grid-enumeration reference optimizer for the base program.
//!
//! Every slot's arrivals are split over its admissible delays on a uniform
//! simplex grid; the cross product over slots is enumerated exhaustively and
//! scored with the same cost formulas the tests trust. Intended for toy
//! instances only, as a ground truth the conic path is checked against.

use crate::error::{Error, Result};
use crate::incentive::{optimal_reward, total_reward};
use crate::model::{
    baseline_cost, electricity_cost, power_profile, BillingModel, CostBreakdown,
    DeferralSchedule, DemandInput, FleetModel,
};
use crate::optimizer::program::check_inputs;

/// Evaluation budget: instances above this many grid points are rejected.
pub const ORACLE_POINT_LIMIT: u128 = 10_000_000;

/// Best grid point found by exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub schedule: DeferralSchedule,
    pub cost: CostBreakdown,
    pub points_evaluated: u64,
}

/// One admissible split of a slot's arrivals over its delays.
struct SlotChoice {
    /// `(d, amount)` pairs, including d = 0.
    parts: Vec<(usize, f64)>,
    /// Reward owed for this split under the minimal in-band reward.
    reward_usd: f64,
}

/// Exhaustively minimizes electricity cost over per-slot simplex grids,
/// keeping only points whose reward respects profit neutrality.
pub fn brute_force_oracle(
    demand: &DemandInput,
    fleet: &FleetModel,
    billing: &BillingModel,
    d_max: usize,
    grid_steps: usize,
) -> Result<OracleResult> {
    if grid_steps < 2 {
        return Err(Error::InvalidParameter {
            what: "oracle",
            detail: format!("grid_steps {grid_steps} must be at least 2"),
        });
    }
    check_inputs(demand, fleet, billing)?;
    let baseline = baseline_cost(demand, fleet, billing)?;
    let tau = demand.tau();
    let segments = grid_steps - 1;

    // per-slot admissible splits
    let mut choices: Vec<Vec<SlotChoice>> = Vec::with_capacity(tau);
    for t in 0..tau {
        let lam = demand.requests[t];
        let elastic = demand.elastic_volume(t);
        let mut delays = vec![0usize];
        if elastic > 0.0 {
            delays.extend((1..=d_max).filter(|d| t + d < tau));
        }
        let mut slot = Vec::new();
        if lam == 0.0 || delays.len() == 1 {
            slot.push(SlotChoice {
                parts: vec![(0, lam)],
                reward_usd: 0.0,
            });
        } else {
            let weight = (demand.reward_ceiling[t] - demand.reward_floor[t]) / elastic;
            for split in compositions(segments, delays.len()) {
                let parts: Vec<(usize, f64)> = delays
                    .iter()
                    .zip(&split)
                    .map(|(&d, &k)| (d, lam * k as f64 / segments as f64))
                    .collect();
                let deferred: f64 = parts.iter().skip(1).map(|&(_, v)| v).sum();
                if deferred > elastic * (1.0 + 1e-12) {
                    continue; // no in-band reward covers this much deferral
                }
                let reward_usd =
                    weight * deferred * deferred + demand.reward_floor[t] * deferred;
                slot.push(SlotChoice { parts, reward_usd });
            }
        }
        choices.push(slot);
    }

    let total_points: u128 = choices
        .iter()
        .map(|c| c.len() as u128)
        .try_fold(1u128, u128::checked_mul)
        .unwrap_or(u128::MAX);
    if total_points > ORACLE_POINT_LIMIT {
        return Err(Error::OracleTooLarge {
            points: total_points,
            limit: ORACLE_POINT_LIMIT,
        });
    }

    // affine power coefficients per slot
    let idle_kw: Vec<f64> = fleet
        .pue
        .iter()
        .map(|&e| e * f64::from(fleet.servers) * fleet.idle_power_kw)
        .collect();
    let slope: Vec<f64> = fleet
        .pue
        .iter()
        .map(|&e| e * fleet.util_power_kw / fleet.per_server_capacity)
        .collect();
    let cap = fleet.capacity() * (1.0 + 1e-9);
    let budget = baseline.total() * (1.0 + 1e-12) + 1e-12;

    let mut search = Search {
        billing,
        choices: &choices,
        idle_kw: &idle_kw,
        slope: &slope,
        cap,
        budget,
        lambda_hat: vec![0.0; tau],
        picks: vec![0; tau],
        best_cost: f64::INFINITY,
        best_picks: None,
        evaluated: 0,
    };
    search.descend(0, 0.0);
    let evaluated = search.evaluated;
    let best_picks = search.best_picks.ok_or_else(|| Error::Infeasible {
        family: "profit-neutrality".into(),
        detail: "no grid point met the budget (identity should always qualify)".into(),
    })?;

    let mut eta = vec![vec![0.0; tau]; d_max + 1];
    for (t, &pick) in best_picks.iter().enumerate() {
        for &(d, amount) in &choices[t][pick].parts {
            eta[d][t] = amount;
        }
    }
    let schedule = DeferralSchedule::new(d_max, eta)?;
    let rewards = optimal_reward(&schedule, demand)?;
    let lambda_hat = crate::model::scheduled_load(&schedule, demand)?;
    let mut cost = electricity_cost(&power_profile(&lambda_hat, fleet)?, billing)?;
    cost.reward = total_reward(&schedule, &rewards)?;
    cost.baseline = baseline.total();
    Ok(OracleResult {
        schedule,
        cost,
        points_evaluated: evaluated,
    })
}

struct Search<'a> {
    billing: &'a BillingModel,
    choices: &'a [Vec<SlotChoice>],
    idle_kw: &'a [f64],
    slope: &'a [f64],
    cap: f64,
    budget: f64,
    lambda_hat: Vec<f64>,
    picks: Vec<usize>,
    best_cost: f64,
    best_picks: Option<Vec<usize>>,
    evaluated: u64,
}

impl Search<'_> {
    fn descend(&mut self, t: usize, reward_so_far: f64) {
        if t == self.choices.len() {
            self.evaluate(reward_so_far);
            return;
        }
        for pick in 0..self.choices[t].len() {
            let reward = reward_so_far + self.choices[t][pick].reward_usd;
            self.picks[t] = pick;
            for &(d, amount) in &self.choices[t][pick].parts {
                self.lambda_hat[t + d] += amount;
            }
            self.descend(t + 1, reward);
            for &(d, amount) in &self.choices[t][pick].parts {
                self.lambda_hat[t + d] -= amount;
            }
        }
    }

    fn evaluate(&mut self, reward: f64) {
        self.evaluated += 1;
        let tau = self.lambda_hat.len();
        let mut energy = 0.0;
        for t in 0..tau {
            if self.lambda_hat[t] > self.cap {
                return;
            }
            let p = self.idle_kw[t] + self.slope[t] * self.lambda_hat[t];
            energy += self.billing.slot_hours * self.billing.energy_price[t] * p;
        }
        let mut cost = energy;
        for w in &self.billing.windows {
            let peak = w
                .slots
                .iter()
                .map(|&t| self.idle_kw[t] + self.slope[t] * self.lambda_hat[t])
                .fold(f64::NEG_INFINITY, f64::max);
            cost += w.price_per_kw * peak;
        }
        if cost + reward > self.budget {
            return;
        }
        if cost < self.best_cost {
            self.best_cost = cost;
            self.best_picks = Some(self.picks.clone());
        }
    }
}

/// All length-`parts` vectors of non-negative integers summing to `total`,
/// in lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; parts];
    fill(total, 0, &mut current, &mut out);
    out
}

fn fill(remaining: usize, index: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if index + 1 == current.len() {
        current[index] = remaining;
        out.push(current.clone());
        return;
    }
    for value in 0..=remaining {
        current[index] = value;
        fill(remaining - value, index + 1, current, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compositions_cover_the_simplex() {
        let c = compositions(3, 2);
        assert_eq!(c, vec![vec![0, 3], vec![1, 2], vec![2, 1], vec![3, 0]]);
        assert_eq!(compositions(2, 3).len(), 6); // C(4,2)
        assert_eq!(compositions(5, 1), vec![vec![5]]);
    }
}
