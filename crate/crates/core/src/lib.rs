//! Joint transmit-power, bandwidth and semantic-size allocation for a secure
//! FDMA downlink semantic-communication system.
//!
//! The objective trades the end-to-end latency of each user (server-side
//! extraction, transmission at the secrecy rate, user-side recovery) against
//! the utility of the recovered data. [`solver::resource_allocation`] is the
//! entry point; [`harness`] reproduces the comparative experiments and
//! [`oracle`] holds brute-force checks for small instances.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod semcost;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Allocation, Scenario, UserProfile, Weights};
pub use solver::SolverConfig;
