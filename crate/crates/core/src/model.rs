//! Problem data shared by the cost models, the solver, the oracles and the
//! harness: the scenario, the decision vector, and feasibility checking.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::LinkParams;
use crate::error::{Error, Result};
use crate::semcost::SemanticCostParams;

/// Relative slack allowed on the two budget sums.
pub const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub link: LinkParams,
    pub cost: SemanticCostParams,
}

/// Latency weight `w1` and utility weight `w2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
}

impl Weights {
    pub const fn new(w1: f64, w2: f64) -> Self {
        Self { w1, w2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0 && self.w1 + self.w2 > 0.0) {
            return Err(Error::Invalid(format!(
                "weights must be non-negative with a positive sum, got ({}, {})",
                self.w1, self.w2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub users: Vec<UserProfile>,
    /// Total transmit power budget (W).
    pub p_total: f64,
    /// Total bandwidth budget (Hz).
    pub b_total: f64,
    pub weights: Weights,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn with_weights(&self, weights: Weights) -> Self {
        Self {
            weights,
            ..self.clone()
        }
    }

    /// Checks the scenario invariants: at least one user, valid weights and
    /// per-user parameters, the secrecy power condition for every user, and
    /// a power budget that covers every user's minimum power.
    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return Err(Error::Invalid("scenario has no users".into()));
        }
        self.weights.validate()?;
        if !(self.p_total > 0.0 && self.b_total > 0.0) {
            return Err(Error::Invalid("budgets must be positive".into()));
        }
        for (n, u) in self.users.iter().enumerate() {
            u.link.validate()?;
            u.cost.validate()?;
            let threshold = u.link.secrecy_power_threshold();
            if u.cost.p_min < threshold {
                return Err(Error::SecrecyPrecondition {
                    user: n,
                    p_min: u.cost.p_min,
                    threshold,
                });
            }
        }
        let p_min_sum: f64 = self.users.iter().map(|u| u.cost.p_min).sum();
        if p_min_sum > self.p_total {
            return Err(Error::InfeasibleScenario(format!(
                "sum of minimum powers {p_min_sum:e} W exceeds p_total {:e} W",
                self.p_total
            )));
        }
        Ok(())
    }
}

/// Per-user transmit power (W), bandwidth (Hz) and semantic size (bits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub p: Vec<f64>,
    pub b: Vec<f64>,
    pub s: Vec<f64>,
}

impl Allocation {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    /// `p_n ≥ p_min`
    PowerFloor,
    /// `S_n ≤ S_max`
    SizeCap,
    /// `S_n > 0`
    SizePositive,
    /// `B_n > 0`
    BandwidthPositive,
    /// `Σ p_n ≤ p_total`
    PowerBudget,
    /// `Σ B_n ≤ B_total`
    BandwidthBudget,
    /// `p_min` above the secrecy power threshold
    SecrecyCondition,
    /// vector lengths do not match the user count
    Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub user: Option<usize>,
    /// Signed slack; negative means violated by that amount.
    pub slack: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, constraint: Constraint, user: Option<usize>) -> bool {
        self.violations
            .iter()
            .any(|v| v.constraint == constraint && v.user == user)
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            match v.user {
                Some(n) => writeln!(f, "  {:?} (user {n}): slack {:e}", v.constraint, v.slack)?,
                None => writeln!(f, "  {:?}: slack {:e}", v.constraint, v.slack)?,
            }
        }
        Ok(())
    }
}

/// Checks every constraint of the allocation problem and reports each
/// violated one with its user index and slack.
pub fn check_feasible(alloc: &Allocation, scenario: &Scenario) -> FeasibilityReport {
    let n = scenario.n_users();
    let mut violations = Vec::new();
    let mut push = |constraint, user, slack: f64| {
        violations.push(Violation {
            constraint,
            user,
            slack,
        })
    };
    if alloc.p.len() != n || alloc.b.len() != n || alloc.s.len() != n {
        push(Constraint::Shape, None, -1.0);
        return FeasibilityReport { violations };
    }
    for (k, u) in scenario.users.iter().enumerate() {
        let (p, b, s) = (alloc.p[k], alloc.b[k], alloc.s[k]);
        if !(p >= u.cost.p_min) {
            push(Constraint::PowerFloor, Some(k), p - u.cost.p_min);
        }
        if !(s <= u.cost.s_max) {
            push(Constraint::SizeCap, Some(k), u.cost.s_max - s);
        }
        if !(s > 0.0) {
            push(Constraint::SizePositive, Some(k), s);
        }
        if !(b > 0.0) {
            push(Constraint::BandwidthPositive, Some(k), b);
        }
        let threshold = u.link.secrecy_power_threshold();
        if !(u.cost.p_min >= threshold) {
            push(Constraint::SecrecyCondition, Some(k), u.cost.p_min - threshold);
        }
    }
    let p_sum: f64 = alloc.p.iter().sum();
    if !(p_sum <= scenario.p_total * (1.0 + BUDGET_SLACK)) {
        push(Constraint::PowerBudget, None, scenario.p_total - p_sum);
    }
    let b_sum: f64 = alloc.b.iter().sum();
    if !(b_sum <= scenario.b_total * (1.0 + BUDGET_SLACK)) {
        push(Constraint::BandwidthBudget, None, scenario.b_total - b_sum);
    }
    FeasibilityReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_scenario, ScenarioSpec};
    use crate::solver::equal_split;

    fn scenario() -> Scenario {
        generate_scenario(&ScenarioSpec {
            n_users: 3,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn equal_split_is_feasible() {
        let sc = scenario();
        assert!(check_feasible(&equal_split(&sc).unwrap(), &sc).is_ok());
    }

    #[test]
    fn reports_each_violation_with_user_and_slack() {
        let sc = scenario();
        let ok = equal_split(&sc).unwrap();

        let mut a = ok.clone();
        a.p[1] = sc.users[1].cost.p_min / 2.0;
        let r = check_feasible(&a, &sc);
        assert!(r.violates(Constraint::PowerFloor, Some(1)));
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].slack, -sc.users[1].cost.p_min / 2.0);

        let mut a = ok.clone();
        for b in &mut a.b {
            *b *= 1.01;
        }
        let r = check_feasible(&a, &sc);
        assert!(r.violates(Constraint::BandwidthBudget, None));
        assert!(r.violations[0].slack < 0.0);

        let mut a = ok.clone();
        a.s[2] = 2.0 * sc.users[2].cost.s_max;
        a.b[0] = 0.0;
        let r = check_feasible(&a, &sc);
        assert!(r.violates(Constraint::SizeCap, Some(2)));
        assert!(r.violates(Constraint::BandwidthPositive, Some(0)));
        assert!(!r.violates(Constraint::PowerBudget, None));

        let mut a = ok;
        a.s.pop();
        assert!(check_feasible(&a, &sc).violates(Constraint::Shape, None));
    }

    #[test]
    fn budgets_allow_rounding_slack() {
        let sc = scenario();
        let mut a = equal_split(&sc).unwrap();
        a.p[0] += sc.p_total * BUDGET_SLACK / 2.0;
        assert!(check_feasible(&a, &sc).is_ok());
        a.p[0] += sc.p_total * BUDGET_SLACK;
        assert!(check_feasible(&a, &sc).violates(Constraint::PowerBudget, None));
    }
}
