//! The game between the operator and its users, and the reward rule that
//! makes a planned deferral volume incentive-compatible.
//!
//! Each user weighs the announced per-request reward `gamma[t]` against its
//! private utility-loss factor `kappa_i[t]`; participation is a dominant
//! strategy exactly when `gamma > kappa`. With loss factors of elastic users
//! uniformly distributed over `[Lb[t], Ub[t]]`, the deferrable volume at
//! reward `gamma` is `pi[t] * lambda[t] * (gamma - Lb) / (Ub - Lb)`, and the
//! cheapest reward that covers a planned deferral `q[t]` is
//!
//! ```text
//! gamma*[t] = (Ub[t] - Lb[t]) * q[t] / (pi[t] * lambda[t]) + Lb[t]
//! ```

use crate::error::{Error, Result};
use crate::model::{DeferralSchedule, DemandInput};

/// Relative slack accepted when a deferral sits numerically on the elastic
/// volume boundary (solver output carries residuals of this order).
const DEFERRAL_SLACK: f64 = 1e-9;

/// One user's per-slot traces and preferences. Inelastic users carry
/// `loss_factor = +inf` and never participate.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub id: String,
    /// Requests generated per slot.
    pub requests: Vec<f64>,
    /// Net utility per processed request, $ (`V_i[t]`).
    pub unit_value: Vec<f64>,
    /// Baseline price charged per request, $ (`delta_i[t]`).
    pub unit_price: Vec<f64>,
    /// Utility lost per deferred request, $ (`kappa_i[t]`, may be +inf).
    pub loss_factor: Vec<f64>,
}

impl UserProfile {
    pub fn new(
        id: impl Into<String>,
        requests: Vec<f64>,
        unit_value: Vec<f64>,
        unit_price: Vec<f64>,
        loss_factor: Vec<f64>,
    ) -> Result<Self> {
        let tau = requests.len();
        for (what, len) in [
            ("unit value", unit_value.len()),
            ("unit price", unit_price.len()),
            ("loss factor", loss_factor.len()),
        ] {
            if len != tau {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: tau,
                    actual: len,
                });
            }
        }
        for (t, &l) in requests.iter().enumerate() {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::InvalidParameter {
                    what: "user requests",
                    detail: format!("value {l} at slot {t}"),
                });
            }
        }
        for (t, (&v, &p)) in unit_value.iter().zip(&unit_price).enumerate() {
            if !v.is_finite() || !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidParameter {
                    what: "user pricing",
                    detail: format!("value {v} / price {p} at slot {t}"),
                });
            }
        }
        for (t, &k) in loss_factor.iter().enumerate() {
            if k.is_nan() || k < 0.0 {
                return Err(Error::InvalidParameter {
                    what: "loss factor",
                    detail: format!("value {k} at slot {t}"),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            requests,
            unit_value,
            unit_price,
            loss_factor,
        })
    }

    pub fn tau(&self) -> usize {
        self.requests.len()
    }
}

/// Per-slot reward paid for each deferred request, $.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSchedule {
    pub usd_per_request: Vec<f64>,
}

impl RewardSchedule {
    pub fn new(usd_per_request: Vec<f64>) -> Result<Self> {
        for (t, &g) in usd_per_request.iter().enumerate() {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::InvalidParameter {
                    what: "reward",
                    detail: format!("value {g} at slot {t}"),
                });
            }
        }
        Ok(Self { usd_per_request })
    }

    pub fn tau(&self) -> usize {
        self.usd_per_request.len()
    }

    /// Checks every reward sits in the announced `[Lb, Ub]` band.
    pub fn check_bounds(&self, demand: &DemandInput) -> Result<()> {
        if self.tau() != demand.tau() {
            return Err(Error::DimensionMismatch {
                what: "reward horizon",
                expected: demand.tau(),
                actual: self.tau(),
            });
        }
        for (t, &g) in self.usd_per_request.iter().enumerate() {
            if g < demand.reward_floor[t] || g > demand.reward_ceiling[t] {
                return Err(Error::RewardOutOfBounds {
                    slot: t,
                    reward: g,
                    floor: demand.reward_floor[t],
                    ceiling: demand.reward_ceiling[t],
                });
            }
        }
        Ok(())
    }
}

/// Outcome of settling one user's cycle: what it deferred, what it was paid,
/// what it was charged, and the surplus it realized.
#[derive(Debug, Clone, PartialEq)]
pub struct SettlementRecord {
    pub user_id: String,
    /// Whether the user granted deferral at each slot.
    pub participated: Vec<bool>,
    /// Requests of this user actually deferred per slot.
    pub deferred: Vec<f64>,
    /// Reward paid per slot, $.
    pub payout: Vec<f64>,
    /// Baseline charge per slot (`delta_i[t] * lambda_i[t]`), $.
    pub charge: Vec<f64>,
    /// Realized surplus per slot, $.
    pub surplus: Vec<f64>,
}

impl SettlementRecord {
    pub fn total_payout(&self) -> f64 {
        self.payout.iter().sum()
    }

    pub fn total_surplus(&self) -> f64 {
        self.surplus.iter().sum()
    }
}

/// Whether granting deferral is the dominant strategy at reward `gamma` for a
/// user with loss factor `kappa`. Ties decline: at `gamma == kappa` deferral
/// buys the user nothing.
pub fn dominant_strategy(kappa: f64, gamma: f64) -> bool {
    gamma > kappa
}

/// Surplus a user realizes at slot `t` without and with participation, given
/// `deferred` of its requests were actually shifted.
///
/// Returns `(declined, participating)`.
pub fn user_surplus(
    profile: &UserProfile,
    t: usize,
    gamma: f64,
    deferred: f64,
) -> Result<(f64, f64)> {
    let available = profile.requests[t];
    if !(0.0..=available).contains(&deferred) {
        return Err(Error::DeferredOutOfRange {
            slot: t,
            deferred,
            available,
        });
    }
    let base = available * (profile.unit_value[t] - profile.unit_price[t]);
    // deferred == 0 leaves the surplus untouched even for infinite kappa
    let with = if deferred == 0.0 {
        base
    } else {
        base + deferred * (gamma - profile.loss_factor[t])
    };
    Ok((base, with))
}

/// The cheapest in-band reward covering the schedule's deferral at each slot.
///
/// Zero planned deferral yields the floor `Lb[t]`; deferral equal to the full
/// elastic volume yields the ceiling `Ub[t]` exactly. Deferral beyond the
/// elastic volume (beyond numerical slack) is not incentivizable by any
/// in-band reward and errors.
pub fn optimal_reward(
    schedule: &DeferralSchedule,
    demand: &DemandInput,
) -> Result<RewardSchedule> {
    if schedule.tau() != demand.tau() {
        return Err(Error::DimensionMismatch {
            what: "schedule horizon",
            expected: demand.tau(),
            actual: schedule.tau(),
        });
    }
    let q = schedule.deferred_per_slot();
    let mut gamma = Vec::with_capacity(q.len());
    for (t, &q_t) in q.iter().enumerate() {
        let elastic = demand.elastic_volume(t);
        let floor = demand.reward_floor[t];
        let ceiling = demand.reward_ceiling[t];
        if q_t > elastic * (1.0 + DEFERRAL_SLACK) + DEFERRAL_SLACK {
            return Err(Error::InfeasibleReward {
                slot: t,
                deferred: q_t,
                elastic,
            });
        }
        let g = if q_t <= 0.0 || elastic <= 0.0 {
            floor
        } else if q_t >= elastic {
            ceiling
        } else {
            floor + (ceiling - floor) * q_t / elastic
        };
        gamma.push(g);
    }
    Ok(RewardSchedule {
        usd_per_request: gamma,
    })
}

/// Requests that elastic users are willing to defer at slot `t` under reward
/// `gamma` (the uniform-distribution participation curve).
pub fn deferrable_capacity(gamma: f64, demand: &DemandInput, t: usize) -> Result<f64> {
    let floor = demand.reward_floor[t];
    let ceiling = demand.reward_ceiling[t];
    if !gamma.is_finite() || gamma < floor || gamma > ceiling {
        return Err(Error::RewardOutOfBounds {
            slot: t,
            reward: gamma,
            floor,
            ceiling,
        });
    }
    Ok(demand.elastic_volume(t) * (gamma - floor) / (ceiling - floor))
}

/// Total rewards paid over the cycle: undeferred requests earn nothing.
pub fn total_reward(schedule: &DeferralSchedule, rewards: &RewardSchedule) -> Result<f64> {
    if rewards.tau() != schedule.tau() {
        return Err(Error::DimensionMismatch {
            what: "reward horizon",
            expected: schedule.tau(),
            actual: rewards.tau(),
        });
    }
    Ok(schedule
        .deferred_per_slot()
        .iter()
        .zip(&rewards.usd_per_request)
        .map(|(&q, &g)| g * q)
        .sum())
}

/// Splits the aggregate deferral of each slot pro-rata over the users whose
/// dominant strategy at that slot's reward is to participate.
pub fn settle_rewards(
    users: &[UserProfile],
    schedule: &DeferralSchedule,
    rewards: &RewardSchedule,
) -> Result<Vec<SettlementRecord>> {
    let tau = schedule.tau();
    if rewards.tau() != tau {
        return Err(Error::DimensionMismatch {
            what: "reward horizon",
            expected: tau,
            actual: rewards.tau(),
        });
    }
    for u in users {
        if u.tau() != tau {
            return Err(Error::DimensionMismatch {
                what: "user trace horizon",
                expected: tau,
                actual: u.tau(),
            });
        }
    }
    let q = schedule.deferred_per_slot();
    let mut records: Vec<SettlementRecord> = users
        .iter()
        .map(|u| SettlementRecord {
            user_id: u.id.clone(),
            participated: vec![false; tau],
            deferred: vec![0.0; tau],
            payout: vec![0.0; tau],
            charge: u
                .requests
                .iter()
                .zip(&u.unit_price)
                .map(|(&l, &p)| l * p)
                .collect(),
            surplus: vec![0.0; tau],
        })
        .collect();

    for t in 0..tau {
        let gamma = rewards.usd_per_request[t];
        let mut pool = 0.0;
        for u in users {
            if dominant_strategy(u.loss_factor[t], gamma) {
                pool += u.requests[t];
            }
        }
        if q[t] > pool * (1.0 + DEFERRAL_SLACK) + DEFERRAL_SLACK {
            return Err(Error::SettlementOverflow {
                slot: t,
                deferred: q[t],
                available: pool,
            });
        }
        for (u, rec) in users.iter().zip(&mut records) {
            let joins = dominant_strategy(u.loss_factor[t], gamma);
            rec.participated[t] = joins;
            let share = if joins && pool > 0.0 && q[t] > 0.0 {
                (q[t] * u.requests[t] / pool).min(u.requests[t])
            } else {
                0.0
            };
            rec.deferred[t] = share;
            rec.payout[t] = gamma * share;
            let (declined, with) = user_surplus(u, t, gamma, share)?;
            rec.surplus[t] = if joins { with } else { declined };
        }
    }
    Ok(records)
}

/// Revenue under per-user traces; equals the aggregate form when the traces
/// sum to the aggregate demand.
pub fn revenue_from_users(users: &[UserProfile]) -> f64 {
    users
        .iter()
        .flat_map(|u| u.requests.iter().zip(&u.unit_price))
        .map(|(&l, &p)| l * p)
        .sum()
}
