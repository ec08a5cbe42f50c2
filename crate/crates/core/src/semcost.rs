//! Fitted cost models of the semantic link: extraction cycles at the server,
//! recovery cycles at the user, the three latency components, utility, and
//! the weighted objective.

use serde::{Deserialize, Serialize};

use crate::channel::{self, LinkParams, ScaAnchor};
use crate::error::{Error, Result};
use crate::model::{check_feasible, Allocation, Scenario, Weights};

/// Smallest semantic size (bits) the solver searches.
pub const S_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticCostParams {
    /// Original data size D (bits).
    pub d_data: f64,
    /// Extraction-cost scale (cycles).
    pub c1: f64,
    /// Extraction-cost exponent, a positive even integer.
    pub c2: u32,
    /// Recovery-cost scale (cycles·bits^c4).
    pub c3: f64,
    /// Recovery-cost exponent.
    pub c4: f64,
    /// Utility rate (1/bit).
    pub c5: f64,
    /// Graph-construction cost per original bit (cycles/bit).
    pub y2_coeff: f64,
    /// Server compute allocated to the user (cycles/s).
    pub f_server: f64,
    /// User compute (cycles/s).
    pub g_user: f64,
    /// Largest semantic size (bits).
    pub s_max: f64,
    /// Minimum transmit power (W).
    pub p_min: f64,
}

impl Default for SemanticCostParams {
    fn default() -> Self {
        Self {
            d_data: 8e8,
            c1: 5e9,
            c2: 2,
            c3: DEFAULT_C3,
            c4: 1.0,
            c5: DEFAULT_C5,
            y2_coeff: 1.0,
            f_server: 10e9,
            g_user: 2e9,
            s_max: 2.4e8,
            p_min: 1e-3,
        }
    }
}

/// Default recovery-cost scale. Places the user-side recovery time in the
/// same range as the transmission time at the default scenario.
pub const DEFAULT_C3: f64 = 1e15;
/// Default utility rate (1/bit).
pub const DEFAULT_C5: f64 = 1e-6;

impl SemanticCostParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_data", self.d_data),
            ("c1", self.c1),
            ("c3", self.c3),
            ("c4", self.c4),
            ("f_server", self.f_server),
            ("g_user", self.g_user),
            ("s_max", self.s_max),
            ("p_min", self.p_min),
        ];
        for (what, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(what, v, "must be positive and finite"));
            }
        }
        if self.c2 < 2 || !self.c2.is_multiple_of(2) {
            return Err(Error::domain(
                "c2",
                self.c2 as f64,
                "must be an even integer of at least 2",
            ));
        }
        if !(self.c5 >= 0.0 && self.c5.is_finite()) {
            return Err(Error::domain("c5", self.c5, "must be non-negative"));
        }
        if !(self.y2_coeff >= 0.0 && self.y2_coeff.is_finite()) {
            return Err(Error::domain("y2_coeff", self.y2_coeff, "must be non-negative"));
        }
        if self.s_max > self.d_data {
            return Err(Error::domain(
                "s_max",
                self.s_max,
                "must not exceed the original data size",
            ));
        }
        Ok(())
    }
}

/// Extraction cycles at the server: graph construction `a·D` plus
/// `c1·(s/D − 1)^c2`, lowest at `s = D`.
pub fn server_cycles(s: f64, params: &SemanticCostParams) -> Result<f64> {
    if !(s > 0.0 && s <= params.d_data) {
        return Err(Error::domain("s", s, "must lie in (0, d_data]"));
    }
    Ok(server_cycles_unchecked(s, params))
}

#[inline]
fn server_cycles_unchecked(s: f64, params: &SemanticCostParams) -> f64 {
    params.y2_coeff * params.d_data + params.c1 * (s / params.d_data - 1.0).powi(params.c2 as i32)
}

pub fn d_server_cycles(s: f64, params: &SemanticCostParams) -> f64 {
    let c2 = params.c2 as i32;
    params.c1 * f64::from(params.c2) * (s / params.d_data - 1.0).powi(c2 - 1) / params.d_data
}

/// Recovery cycles at the user, `c3·s^(−c4)`.
pub fn user_cycles(s: f64, params: &SemanticCostParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::domain("s", s, "must be positive"));
    }
    Ok(params.c3 * s.powf(-params.c4))
}

pub fn d_user_cycles(s: f64, params: &SemanticCostParams) -> f64 {
    -params.c4 * params.c3 * s.powf(-params.c4 - 1.0)
}

/// Saturating utility `1 − exp(−c5·s)`.
pub fn utility(s: f64, params: &SemanticCostParams) -> f64 {
    -(-params.c5 * s).exp_m1()
}

pub fn d_utility(s: f64, params: &SemanticCostParams) -> f64 {
    params.c5 * (-params.c5 * s).exp()
}

/// Size-only part of a user's objective, `w1·(T1 + T3) − w2·U`.
pub fn size_cost(s: f64, params: &SemanticCostParams, weights: Weights) -> f64 {
    let t1 = server_cycles_unchecked(s, params) / params.f_server;
    let t3 = params.c3 * s.powf(-params.c4) / params.g_user;
    weights.w1 * (t1 + t3) - weights.w2 * utility(s, params)
}

/// Derivative of [`size_cost`] in `s`.
pub fn size_cost_derivative(s: f64, params: &SemanticCostParams, weights: Weights) -> f64 {
    weights.w1 * (d_server_cycles(s, params) / params.f_server + d_user_cycles(s, params) / params.g_user)
        - weights.w2 * d_utility(s, params)
}

/// Which rate divides the semantic size in the transmission time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateModel {
    /// True secrecy rate, used for reporting.
    Exact,
    /// Linearized surrogate about an anchor, used inside the optimizer.
    Surrogate(ScaAnchor),
}

impl RateModel {
    pub fn rate(&self, p: f64, b: f64, link: &LinkParams) -> Result<f64> {
        match self {
            RateModel::Exact => Ok(channel::rate(p, b, link)? - channel::eavesdrop_rate(b, link)?),
            RateModel::Surrogate(anchor) => channel::surrogate_rate(p, b, link, *anchor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    /// Server computation time (s).
    pub t1: f64,
    /// Transmission time (s).
    pub t2: f64,
    /// User computation time (s).
    pub t3: f64,
}

impl Latency {
    pub fn total(&self) -> f64 {
        self.t1 + self.t2 + self.t3
    }
}

/// Server computation, transmission and user computation times.
pub fn latency_components(
    user: usize,
    s: f64,
    p: f64,
    b: f64,
    link: &LinkParams,
    model: RateModel,
    params: &SemanticCostParams,
) -> Result<Latency> {
    let r = model.rate(p, b, link)?;
    if !(r > 0.0) {
        return Err(Error::NonPositiveRate { user, rate: r });
    }
    Ok(Latency {
        t1: server_cycles(s, params)? / params.f_server,
        t2: s / r,
        t3: user_cycles(s, params)? / params.g_user,
    })
}

/// Objective of the exact problem or of its surrogate, depending on whether
/// anchors are supplied.
#[derive(Debug, Clone, Copy)]
pub enum ObjectiveKind<'a> {
    Exact,
    Surrogate(&'a [ScaAnchor]),
}

/// Per-user reporting record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub latency: Latency,
    pub rate: f64,
    pub utility: f64,
}

pub fn user_metrics(
    alloc: &Allocation,
    scenario: &Scenario,
    kind: ObjectiveKind<'_>,
) -> Result<Vec<UserMetrics>> {
    scenario
        .users
        .iter()
        .enumerate()
        .map(|(n, u)| {
            let model = match kind {
                ObjectiveKind::Exact => RateModel::Exact,
                ObjectiveKind::Surrogate(anchors) => RateModel::Surrogate(anchors[n]),
            };
            let (p, b, s) = (alloc.p[n], alloc.b[n], alloc.s[n]);
            let latency = latency_components(n, s, p, b, &u.link, model, &u.cost)?;
            Ok(UserMetrics {
                latency,
                rate: model.rate(p, b, &u.link)?,
                utility: utility(s, &u.cost),
            })
        })
        .collect()
}

/// `Σ_n (w1·(T1 + T2 + T3) − w2·U_n)` for a feasible allocation.
pub fn objective(alloc: &Allocation, scenario: &Scenario, kind: ObjectiveKind<'_>) -> Result<f64> {
    let report = check_feasible(alloc, scenario);
    if !report.is_ok() {
        return Err(Error::Infeasible(report));
    }
    let w = scenario.weights;
    Ok(user_metrics(alloc, scenario, kind)?
        .iter()
        .map(|m| w.w1 * m.latency.total() - w.w2 * m.utility)
        .sum())
}
