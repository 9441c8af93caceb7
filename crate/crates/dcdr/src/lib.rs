//! Demand response for a single data center billed on a two-part tariff.
//!
//! The operator announces a per-slot monetary reward for letting it defer
//! requests; rational users participate exactly when the reward exceeds their
//! utility loss. Given aggregate demand, this crate computes the reward rule
//! that makes any planned deferral incentive-compatible, and solves convex
//! programs that minimize the electricity bill (energy plus peak demand
//! charges) subject to never spending more than the bill would have been
//! without demand response. Extensions cover server shutdown with toggling
//! overhead and wear, and on-site renewable generation.
//!
//! Entry points:
//! - [`model`]: billing cycle, fleet power, tariff evaluation.
//! - [`incentive`]: user game, reward rule, settlement.
//! - [`optimizer`]: the three cost-minimization programs and their solver.
//! - [`trace`]: CSV trace ingestion, synthetic demand, wind-to-energy.
//! - [`harness`]: config-driven experiment runner with CSV reports.
//!
//! The `examples/` directory holds one runnable program per capability; the
//! `dcdr` binary drives the same pipeline from a TOML config.

pub mod error;
pub mod harness;
pub mod incentive;
pub mod model;
pub mod optimizer;
pub mod trace;

pub use error::{Error, Result};
