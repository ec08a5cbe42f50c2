//! Three-layer allocator: successive convex approximation of the secrecy
//! rate (outer), quadratic-transform fractional programming over the
//! sum of latency ratios (middle), and a KKT solver for the resulting convex
//! problem (inner).

mod fp;
mod kkt;
pub mod roots;
mod sca;

use serde::{Deserialize, Serialize};

use crate::channel::ScaAnchor;
use crate::error::{Error, Result};

pub use crate::model::{check_feasible, Allocation, FeasibilityReport, Scenario};
pub use fp::{fractional_programming, quad_transform_value, update_z, FpOutcome};
pub use kkt::{
    kkt_residuals, kkt_solve, solve_gamma, solve_s, solve_xi, BandwidthClamp, BandwidthSolution,
    KktMultipliers, KktResiduals, KktSolution, PowerEndpoints, PricedAllocation, PricedSolution,
    UserProblem,
};
pub use roots::RootMethod;
pub use sca::{
    equal_split, relative_change, resource_allocation, MetricsReport, SolveOutcome, TraceRecord,
    UserReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Outer convergence tolerance on the relative change of (p, B, S).
    pub eps0: f64,
    /// Outer iteration cap.
    pub k_max: usize,
    /// Fractional-programming iteration cap per outer iteration.
    pub j_max: usize,
    /// Cap on the number of re-linearizations of the eavesdropper rate.
    pub i_max: usize,
    /// Relative bracket tolerance of every root search.
    pub bisect_tol: f64,
    pub bisect_max_iter: usize,
    pub root_method: RootMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps0: 1e-4,
            k_max: 20,
            j_max: 30,
            i_max: 20,
            bisect_tol: 1e-10,
            bisect_max_iter: 200,
            root_method: RootMethod::Brent,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.bisect_tol > 0.0) {
            return Err(Error::Invalid("eps0 and bisect_tol must be positive".into()));
        }
        if self.k_max == 0 || self.j_max == 0 || self.i_max == 0 || self.bisect_max_iter == 0 {
            return Err(Error::Invalid("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Auxiliaries and linearization points carried between iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub z: Vec<f64>,
    pub anchors: Vec<ScaAnchor>,
    pub k_outer: usize,
    pub j_fp: usize,
    pub i_sca: usize,
}

/// Anchors at the bandwidths of `alloc`.
pub fn anchors_at(alloc: &Allocation) -> Result<Vec<ScaAnchor>> {
    alloc.b.iter().map(|&b| ScaAnchor::new(b)).collect()
}
