//! Simulation laboratory for Counterfactual-UCB (CFUCB) recommendation.
//!
//! Users with fixed preferences arrive according to renewal processes and pull
//! arms under a disjoint linear reward model. Opted-in users combine their own
//! confidence bounds with counterfactual bounds synthesized from donor users
//! through a synthetic control oracle; opted-out users run plain UCB. The
//! harness measures pseudo-regret and checks the supporting theory numerically.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrivals;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod policy;
mod serde_inf;
pub mod theory;

pub use error::{Error, Result};
