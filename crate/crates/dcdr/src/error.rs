//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by model construction, scheduling, optimization, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Two series that must share the billing horizon disagree in length.
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A model parameter violates its domain.
    #[error("invalid {what}: {detail}")]
    InvalidParameter { what: &'static str, detail: String },

    /// Scheduled load exceeds the fleet's per-slot capacity.
    #[error("capacity violated at slot {slot}: load {load_requests} exceeds {capacity_requests}")]
    CapacityExceeded {
        slot: usize,
        load_requests: f64,
        capacity_requests: f64,
    },

    /// Deferred request count outside `[0, lambda_i[t]]`.
    #[error("deferred amount {deferred} outside [0, {available}] at slot {slot}")]
    DeferredOutOfRange {
        slot: usize,
        deferred: f64,
        available: f64,
    },

    /// A reward outside the `[Lb, Ub]` band announced to users.
    #[error("reward {reward} outside [{floor}, {ceiling}] at slot {slot}")]
    RewardOutOfBounds {
        slot: usize,
        reward: f64,
        floor: f64,
        ceiling: f64,
    },

    /// Planned deferral exceeds what any in-band reward can incentivize.
    #[error(
        "infeasible reward at slot {slot}: deferral {deferred} exceeds elastic volume {elastic}"
    )]
    InfeasibleReward {
        slot: usize,
        deferred: f64,
        elastic: f64,
    },

    /// Aggregate deferral at a slot exceeds the participants' combined requests.
    #[error("settlement overflow at slot {slot}: deferral {deferred} exceeds participant requests {available}")]
    SettlementOverflow {
        slot: usize,
        deferred: f64,
        available: f64,
    },

    /// The program admits no feasible point.
    #[error("program infeasible: {family} constraints cannot be satisfied{detail}")]
    Infeasible { family: String, detail: String },

    /// The solver stopped before reaching the requested accuracy.
    #[error("solver did not converge after {iterations} iterations (status: {status})")]
    NonConvergence { status: String, iterations: u32 },

    /// Brute-force enumeration would exceed the evaluation budget.
    #[error("oracle instance too large: {points} grid points exceeds limit {limit}")]
    OracleTooLarge { points: u128, limit: u128 },

    /// A trace file failed to parse.
    #[error("trace error in {path:?} line {line}: {detail}")]
    TraceFormat {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// Experiment configuration is inconsistent or incomplete.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
