//! KKT solver for the convex per-`z` problem
//!
//! ```text
//! min Σ_n  W_n(S_n) + w1·(S_n²·z_n + 1/(4·R_n(p_n, B_n)²·z_n))
//! s.t. S_n ≤ S_max,n,  p_n ≥ p_min,n,  Σ p_n ≤ p_total,  Σ B_n ≤ B_total
//! ```
//!
//! The size variables decouple from (p, B) and are solved per user. Power
//! and bandwidth are coupled through the two budget multipliers: for a given
//! bandwidth price ξ the power price γ is found by a root search on the power
//! budget, and ξ itself by a root search on the bandwidth budget with γ(ξ)
//! re-solved at every trial. Every search runs on a monotone residual.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::channel::{ScaAnchor, Surrogate, B_FLOOR};
use crate::error::{Error, Result};
use crate::model::{Allocation, Scenario, UserProfile};
use crate::semcost::{size_cost_derivative, S_FLOOR};

use super::roots::{bracket_near, find_root, Bracket, RootOptions};
use super::SolverConfig;

/// Budget multipliers and box-constraint multipliers of the inner problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktMultipliers {
    /// Per-user multiplier of `S_n ≤ S_max`.
    pub alpha: Vec<f64>,
    /// Per-user multiplier of `p_n ≥ p_min`.
    pub beta: Vec<f64>,
    /// Power budget multiplier.
    pub gamma: f64,
    /// Bandwidth budget multiplier.
    pub xi: f64,
}

/// Where a per-user bandwidth solve landed in `[B_FLOOR, B_total]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandwidthClamp {
    Interior,
    /// No positive marginal value anywhere: the user is starved.
    Floor,
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthSolution {
    pub b: f64,
    pub clamp: BandwidthClamp,
}

/// Initial relative step of the warm-started per-user searches.
const WARM_STEP: f64 = 1e-3;

/// One user's slice of the inner problem for fixed `z_n` and anchor.
#[derive(Debug, Clone)]
pub struct UserProblem<'a> {
    pub profile: &'a UserProfile,
    surrogate: Surrogate,
    pub z: f64,
    pub w1: f64,
    pub p_cap: f64,
    pub b_cap: f64,
    opts: RootOptions,
    // last interior roots, used to start the next search nearby
    p_hint: Cell<f64>,
    b_hint: Cell<f64>,
}

impl<'a> UserProblem<'a> {
    pub fn new(
        profile: &'a UserProfile,
        anchor: ScaAnchor,
        z: f64,
        scenario: &Scenario,
        config: &SolverConfig,
    ) -> Self {
        Self {
            profile,
            surrogate: Surrogate::new(&profile.link, anchor.b_anchor),
            z,
            w1: scenario.weights.w1,
            p_cap: scenario.p_total,
            b_cap: scenario.b_total,
            opts: RootOptions {
                method: config.root_method,
                x_rel_tol: config.bisect_tol,
                x_abs_floor: 0.0,
                f_tol: 0.0,
                max_iter: config.bisect_max_iter,
            },
            p_hint: Cell::new(f64::NAN),
            b_hint: Cell::new(f64::NAN),
        }
    }

    /// Root search on `[lo, hi]`, first narrowed around `hint` when it holds
    /// a previous root.
    fn warm_root<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        hint: &Cell<f64>,
        lo: f64,
        f_lo: f64,
        hi: f64,
        f_hi: f64,
    ) -> Bracket {
        let near = bracket_near(&mut f, hint.get(), lo, f_lo, hi, f_hi, WARM_STEP);
        let br = find_root(f, near.a, near.fa, near.b, near.fb, &self.opts);
        hint.set(br.best());
        br
    }

    /// Marginal decrease of `w1/(4R²z)` per unit of `dR`: `w1·dR/(2R³z)`.
    #[inline]
    fn marginal(&self, r: f64, dr: f64) -> f64 {
        self.w1 * dr / (2.0 * r * r * r * self.z)
    }

    /// `w1·∂R/∂B/(2R³z)` at `(p, b)`.
    pub fn bandwidth_marginal(&self, p: f64, b: f64) -> f64 {
        let e = self.surrogate.eval(p, b);
        self.marginal(e.value, e.d_b)
    }

    /// `w1·∂R/∂p/(2R³z)` at `(p, b)`.
    pub fn power_marginal(&self, p: f64, b: f64) -> f64 {
        let e = self.surrogate.eval(p, b);
        self.marginal(e.value, e.d_p)
    }

    pub fn surrogate_rate(&self, p: f64, b: f64) -> f64 {
        self.surrogate.eval(p, b).value
    }

    /// Sign-equivalent of `bandwidth_marginal − ξ` that stays finite where
    /// the surrogate rate crosses zero.
    #[inline]
    fn bandwidth_residual(&self, p: f64, b: f64, xi: f64) -> f64 {
        let e = self.surrogate.eval(p, b);
        let r3 = e.value * e.value * e.value;
        let lhs = self.w1 * e.d_b / (2.0 * self.z);
        if e.d_b > 0.0 {
            lhs - xi * r3
        } else {
            lhs - xi * r3.abs()
        }
    }

    /// Bandwidth solving the B-stationarity condition for power `p` and
    /// bandwidth price `xi`, clamped to `[B_FLOOR, B_total]`.
    pub fn solve_b_given(&self, p: f64, xi: f64) -> Result<BandwidthSolution> {
        let f_lo = self.bandwidth_residual(p, B_FLOOR, xi);
        if f_lo <= 0.0 {
            return Ok(BandwidthSolution {
                b: B_FLOOR,
                clamp: BandwidthClamp::Floor,
            });
        }
        let f_hi = self.bandwidth_residual(p, self.b_cap, xi);
        let sol = if f_hi >= 0.0 {
            BandwidthSolution {
                b: self.b_cap,
                clamp: BandwidthClamp::Cap,
            }
        } else {
            let br = self.warm_root(
                |b| self.bandwidth_residual(p, b, xi),
                &self.b_hint,
                B_FLOOR,
                f_lo,
                self.b_cap,
                f_hi,
            );
            BandwidthSolution {
                b: br.best(),
                clamp: BandwidthClamp::Interior,
            }
        };
        if self.surrogate_rate(p, sol.b) <= 0.0 {
            return Err(Error::InfeasibleRate { user: usize::MAX });
        }
        Ok(sol)
    }

    fn power_residual(&self, p: f64, xi: f64, gamma: f64) -> Result<(f64, BandwidthSolution)> {
        let bs = self.solve_b_given(p, xi)?;
        Ok((self.power_marginal(p, bs.b) - gamma, bs))
    }

    /// The two ends of the power search for bandwidth price `xi`.
    pub fn power_endpoints(&self, xi: f64) -> Result<PowerEndpoints> {
        let p_min = self.profile.cost.p_min;
        let at_min = self.solve_b_given(p_min, xi)?;
        let at_cap = self.solve_b_given(self.p_cap, xi)?;
        Ok(PowerEndpoints {
            marginal_at_min: self.power_marginal(p_min, at_min.b),
            b_at_min: at_min,
            marginal_at_cap: self.power_marginal(self.p_cap, at_cap.b),
            b_at_cap: at_cap,
        })
    }

    /// Power solving the p-stationarity condition for prices `(xi, gamma)`,
    /// already lifted to `p_min`; returns it with the matching bandwidth.
    pub fn solve_p_given(
        &self,
        xi: f64,
        gamma: f64,
        ends: &PowerEndpoints,
    ) -> Result<(f64, BandwidthSolution)> {
        let p_min = self.profile.cost.p_min;
        if ends.marginal_at_min <= gamma {
            return Ok((p_min, ends.b_at_min));
        }
        if ends.marginal_at_cap >= gamma {
            return Ok((self.p_cap, ends.b_at_cap));
        }
        let mut failure = None;
        let br = self.warm_root(
            |p| match self.power_residual(p, xi, gamma) {
                Ok((r, _)) => r,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            &self.p_hint,
            p_min,
            ends.marginal_at_min - gamma,
            self.p_cap,
            ends.marginal_at_cap - gamma,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let p = br.best();
        let bs = self.solve_b_given(p, xi)?;
        Ok((p, bs))
    }

    /// S-stationarity residual `W'(s) + 2·w1·z·s`, increasing in `s`.
    pub fn size_residual(&self, s: f64, scenario: &Scenario) -> f64 {
        size_cost_derivative(s, &self.profile.cost, scenario.weights) + 2.0 * self.w1 * self.z * s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerEndpoints {
    pub marginal_at_min: f64,
    pub b_at_min: BandwidthSolution,
    pub marginal_at_cap: f64,
    pub b_at_cap: BandwidthSolution,
}

fn tag_user(err: Error, user: usize) -> Error {
    match err {
        Error::InfeasibleRate { .. } => Error::InfeasibleRate { user },
        other => other,
    }
}

/// Per-user power and bandwidth at fixed prices.
#[derive(Debug, Clone)]
pub struct PricedAllocation {
    pub gamma: f64,
    pub p: Vec<f64>,
    pub b: Vec<f64>,
    pub clamps: Vec<BandwidthClamp>,
}

impl PricedAllocation {
    fn power_sum(&self) -> f64 {
        self.p.iter().sum()
    }

    fn bandwidth_sum(&self) -> f64 {
        self.b.iter().sum()
    }
}

fn allocate_at(
    users: &[UserProblem<'_>],
    ends: &[PowerEndpoints],
    xi: f64,
    gamma: f64,
) -> Result<PricedAllocation> {
    let n = users.len();
    let mut out = PricedAllocation {
        gamma,
        p: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        clamps: Vec::with_capacity(n),
    };
    for (k, (u, e)) in users.iter().zip(ends).enumerate() {
        let (p, bs) = u.solve_p_given(xi, gamma, e).map_err(|err| tag_user(err, k))?;
        out.p.push(p);
        out.b.push(bs.b);
        out.clamps.push(bs.clamp);
    }
    Ok(out)
}

/// Power price γ̃(ξ): zero when the unpriced powers fit the budget,
/// otherwise the root of `Σ p̃_n(ξ, γ) = p_total`. The returned allocation
/// never exceeds the power budget.
pub fn solve_gamma(
    users: &[UserProblem<'_>],
    xi: f64,
    scenario: &Scenario,
    config: &SolverConfig,
) -> Result<PricedAllocation> {
    solve_gamma_near(users, xi, scenario, config, &Cell::new(f64::NAN))
}

/// [`solve_gamma`] with the search started around `hint`, which is updated
/// to the price found.
fn solve_gamma_near(
    users: &[UserProblem<'_>],
    xi: f64,
    scenario: &Scenario,
    config: &SolverConfig,
    hint: &Cell<f64>,
) -> Result<PricedAllocation> {
    let p_min_sum: f64 = users.iter().map(|u| u.profile.cost.p_min).sum();
    if p_min_sum > scenario.p_total {
        return Err(Error::InfeasibleScenario(format!(
            "sum of minimum powers {p_min_sum:e} W exceeds p_total {:e} W",
            scenario.p_total
        )));
    }
    let ends = users
        .iter()
        .enumerate()
        .map(|(k, u)| u.power_endpoints(xi).map_err(|e| tag_user(e, k)))
        .collect::<Result<Vec<_>>>()?;

    let at_zero = allocate_at(users, &ends, xi, 0.0)?;
    let excess0 = at_zero.power_sum() - scenario.p_total;
    if excess0 <= 0.0 {
        return Ok(at_zero);
    }
    // at this price every user sits at p_min
    let gamma_hi = ends
        .iter()
        .map(|e| e.marginal_at_min)
        .fold(0.0_f64, f64::max);
    let at_hi = allocate_at(users, &ends, xi, gamma_hi)?;
    let excess_hi = at_hi.power_sum() - scenario.p_total;
    if excess_hi >= 0.0 {
        return Ok(at_hi);
    }

    let opts = RootOptions {
        method: config.root_method,
        x_rel_tol: config.bisect_tol,
        x_abs_floor: 0.0,
        f_tol: config.bisect_tol * scenario.p_total,
        max_iter: config.bisect_max_iter,
    };
    let mut failure = None;
    let mut f = |g| match allocate_at(users, &ends, xi, g) {
        Ok(a) => a.power_sum() - scenario.p_total,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let near = bracket_near(&mut f, hint.get(), 0.0, excess0, gamma_hi, excess_hi, WARM_STEP);
    let br = find_root(&mut f, near.a, near.fa, near.b, near.fb, &opts);
    if let Some(e) = failure {
        return Err(e);
    }
    let gamma = br.nonpositive_side();
    hint.set(gamma);
    allocate_at(users, &ends, xi, gamma)
}

/// Solution of the bandwidth-price search with its nested power price.
#[derive(Debug, Clone)]
pub struct PricedSolution {
    pub xi: f64,
    pub priced: PricedAllocation,
}

/// Bandwidth price ξ*: zero when `Σ B̃_n(0, γ̃(0)) ≤ B_total`, otherwise the
/// root of `Σ B̃_n(ξ, γ̃(ξ)) = B_total` with γ̃ re-solved per trial.
pub fn solve_xi(
    users: &[UserProblem<'_>],
    scenario: &Scenario,
    config: &SolverConfig,
    xi_hint: Option<f64>,
) -> Result<PricedSolution> {
    let at_zero = solve_gamma(users, 0.0, scenario, config)?;
    let excess0 = at_zero.bandwidth_sum() - scenario.b_total;
    if excess0 <= 0.0 {
        return Ok(PricedSolution {
            xi: 0.0,
            priced: at_zero,
        });
    }

    let gamma_hint = Cell::new(f64::NAN);
    let excess = |xi: f64| -> Result<(f64, PricedAllocation)> {
        let a = solve_gamma_near(users, xi, scenario, config, &gamma_hint)?;
        Ok((a.bandwidth_sum() - scenario.b_total, a))
    };

    // Bracket the price, starting from the hint or from the marginal value
    // of an equal bandwidth share.
    let share = scenario.b_total / users.len() as f64;
    let mut x0 = match xi_hint {
        Some(h) if h > 0.0 => h,
        _ => users
            .iter()
            .zip(&at_zero.p)
            .map(|(u, &p)| u.bandwidth_marginal(p, share))
            .filter(|v| v.is_finite() && *v > 0.0)
            .fold(0.0_f64, f64::max),
    };
    if !(x0 > 0.0) {
        x0 = 1e-12;
    }
    let (mut lo, mut f_lo) = (0.0, excess0);
    let (mut hi, mut f_hi);
    let f0 = excess(x0)?.0;
    if f0 > 0.0 {
        (lo, f_lo) = (x0, f0);
        hi = x0;
        let mut grow = 0;
        loop {
            grow += 1;
            if grow > config.bisect_max_iter {
                return Err(Error::InfeasibleScenario(
                    "bandwidth demand exceeds the budget at every price".into(),
                ));
            }
            hi *= 4.0;
            f_hi = excess(hi)?.0;
            if f_hi <= 0.0 {
                break;
            }
            (lo, f_lo) = (hi, f_hi);
        }
    } else {
        (hi, f_hi) = (x0, f0);
        let mut probe = x0;
        for _ in 0..8 {
            probe /= 4.0;
            let f = excess(probe)?.0;
            if f > 0.0 {
                (lo, f_lo) = (probe, f);
                break;
            }
            (hi, f_hi) = (probe, f);
        }
    }
    if f_hi == 0.0 {
        let priced = solve_gamma_near(users, hi, scenario, config, &gamma_hint)?;
        return Ok(PricedSolution { xi: hi, priced });
    }

    let opts = RootOptions {
        method: config.root_method,
        x_rel_tol: config.bisect_tol,
        x_abs_floor: 0.0,
        f_tol: config.bisect_tol * scenario.b_total,
        max_iter: config.bisect_max_iter,
    };
    let mut failure = None;
    let br = find_root(
        |xi| match excess(xi) {
            Ok((f, _)) => f,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        f_lo,
        hi,
        f_hi,
        &opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let xi = br.nonpositive_side();
    let priced = solve_gamma_near(users, xi, scenario, config, &gamma_hint)?;
    Ok(PricedSolution { xi, priced })
}

/// Per-user semantic size: root of `W'(s) + 2·w1·z·s` on `[S_FLOOR, S_max]`,
/// and the multiplier of the size cap.
pub fn solve_s(user: &UserProblem<'_>, scenario: &Scenario, config: &SolverConfig) -> (f64, f64) {
    let s_max = user.profile.cost.s_max;
    let f_lo = user.size_residual(S_FLOOR, scenario);
    if f_lo >= 0.0 {
        return (S_FLOOR, 0.0);
    }
    let f_hi = user.size_residual(s_max, scenario);
    if f_hi <= 0.0 {
        return (s_max, -f_hi);
    }
    let opts = RootOptions {
        method: config.root_method,
        x_rel_tol: config.bisect_tol,
        x_abs_floor: 0.0,
        f_tol: 0.0,
        max_iter: config.bisect_max_iter,
    };
    let br = find_root(|s| user.size_residual(s, scenario), S_FLOOR, f_lo, s_max, f_hi, &opts);
    (br.best(), 0.0)
}

/// Output of one inner solve.
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub alloc: Allocation,
    pub multipliers: KktMultipliers,
    /// Users whose bandwidth hit the 1 Hz floor.
    pub starved: Vec<usize>,
}

pub(crate) fn user_problems<'a>(
    scenario: &'a Scenario,
    z: &[f64],
    anchors: &[ScaAnchor],
    config: &SolverConfig,
) -> Vec<UserProblem<'a>> {
    scenario
        .users
        .iter()
        .zip(z)
        .zip(anchors)
        .map(|((u, &zn), &a)| UserProblem::new(u, a, zn, scenario, config))
        .collect()
}

/// Solves the inner problem for fixed `z` and anchors.
pub fn kkt_solve(
    z: &[f64],
    anchors: &[ScaAnchor],
    scenario: &Scenario,
    config: &SolverConfig,
) -> Result<KktSolution> {
    kkt_solve_hinted(z, anchors, scenario, config, None)
}

pub(crate) fn kkt_solve_hinted(
    z: &[f64],
    anchors: &[ScaAnchor],
    scenario: &Scenario,
    config: &SolverConfig,
    xi_hint: Option<f64>,
) -> Result<KktSolution> {
    let n = scenario.n_users();
    if z.len() != n || anchors.len() != n {
        return Err(Error::Invalid("z and anchors must have one entry per user".into()));
    }
    if let Some(k) = z.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::domain("z", z[k], "auxiliaries must be positive"));
    }
    let users = user_problems(scenario, z, anchors, config);

    let mut alpha = vec![0.0; n];
    let mut s = vec![0.0; n];
    for (k, u) in users.iter().enumerate() {
        (s[k], alpha[k]) = solve_s(u, scenario, config);
    }

    if scenario.weights.w1 == 0.0 {
        // latency carries no weight: power and bandwidth do not enter the objective
        let p_share = scenario.p_total / n as f64;
        let p = scenario
            .users
            .iter()
            .map(|u| p_share.max(u.cost.p_min))
            .collect::<Vec<_>>();
        let excess: f64 = p.iter().sum::<f64>() - scenario.p_total;
        let p = if excess > 0.0 {
            equalize_down(&p, scenario)
        } else {
            p
        };
        return Ok(KktSolution {
            alloc: Allocation {
                p,
                b: vec![scenario.b_total / n as f64; n],
                s,
            },
            multipliers: KktMultipliers {
                alpha,
                beta: vec![0.0; n],
                gamma: 0.0,
                xi: 0.0,
            },
            starved: Vec::new(),
        });
    }

    let sol = solve_xi(&users, scenario, config, xi_hint)?;
    let PricedSolution { mut xi, priced } = sol;
    let mut gamma = priced.gamma;
    let (p, b) = (priced.p, priced.b);

    // Multipliers of active caps that the price searches leave at zero.
    if xi == 0.0 {
        if let Some(k) = (0..n).find(|&k| priced.clamps[k] == BandwidthClamp::Cap) {
            xi = users[k].bandwidth_marginal(p[k], b[k]);
        }
    }
    if gamma == 0.0 {
        if let Some(k) = (0..n).find(|&k| p[k] >= scenario.p_total) {
            gamma = users[k].power_marginal(p[k], b[k]);
        }
    }
    let beta = (0..n)
        .map(|k| {
            if p[k] <= users[k].profile.cost.p_min {
                (gamma - users[k].power_marginal(p[k], b[k])).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let starved = (0..n)
        .filter(|&k| priced.clamps[k] == BandwidthClamp::Floor)
        .collect::<Vec<_>>();
    for &k in &starved {
        log::warn!("user {k}: bandwidth starved at the 1 Hz floor");
    }

    Ok(KktSolution {
        alloc: Allocation { p, b, s },
        multipliers: KktMultipliers {
            alpha,
            beta,
            gamma,
            xi,
        },
        starved,
    })
}

fn equalize_down(p: &[f64], scenario: &Scenario) -> Vec<f64> {
    let p_min: Vec<f64> = scenario.users.iter().map(|u| u.cost.p_min).collect();
    let slack = scenario.p_total - p_min.iter().sum::<f64>();
    let extra: f64 = p.iter().zip(&p_min).map(|(a, b)| a - b).sum();
    p.iter()
        .zip(&p_min)
        .map(|(a, m)| m + (a - m) * slack / extra)
        .collect()
}

/// Scaled KKT residuals of an inner solution. Each stationarity residual is
/// divided by the magnitude of its largest term; each complementary-slackness
/// product is the multiplier relative to its stationarity scale times the
/// constraint slack relative to the constraint scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity_p: f64,
    pub stationarity_b: f64,
    pub stationarity_s: f64,
    pub complementary_slackness: f64,
    pub primal_violation: f64,
    /// Smallest multiplier; must be `≥ 0`.
    pub dual_min: f64,
}

impl KktResiduals {
    pub fn max_residual(&self) -> f64 {
        [
            self.stationarity_p,
            self.stationarity_b,
            self.stationarity_s,
            self.complementary_slackness,
            self.primal_violation,
            (-self.dual_min).max(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn scaled(residual: f64, terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    if scale == 0.0 {
        residual.abs()
    } else {
        residual.abs() / scale
    }
}

/// Evaluates the KKT conditions of the inner problem at `(alloc, mult)`.
pub fn kkt_residuals(
    alloc: &Allocation,
    mult: &KktMultipliers,
    z: &[f64],
    anchors: &[ScaAnchor],
    scenario: &Scenario,
    config: &SolverConfig,
) -> KktResiduals {
    let users = user_problems(scenario, z, anchors, config);
    let w = scenario.weights;
    let mut out = KktResiduals {
        dual_min: mult
            .alpha
            .iter()
            .chain(&mult.beta)
            .chain([&mult.gamma, &mult.xi])
            .fold(f64::INFINITY, |m, &v| m.min(v)),
        ..Default::default()
    };
    let mut p_scale = mult.gamma.abs();
    let mut b_scale = mult.xi.abs();

    for (k, u) in users.iter().enumerate() {
        let (p, b, s) = (alloc.p[k], alloc.b[k], alloc.s[k]);
        let cost = &u.profile.cost;
        if w.w1 > 0.0 {
            let phi_p = u.power_marginal(p, b);
            let phi_b = u.bandwidth_marginal(p, b);
            p_scale = p_scale.max(phi_p.abs());
            b_scale = b_scale.max(phi_b.abs());
            let rp = -phi_p - mult.beta[k] + mult.gamma;
            out.stationarity_p = out
                .stationarity_p
                .max(scaled(rp, &[phi_p, mult.beta[k], mult.gamma]));
            let rb = -phi_b + mult.xi;
            out.stationarity_b = out.stationarity_b.max(scaled(rb, &[phi_b, mult.xi]));

            let beta_rel = mult.beta[k] / phi_p.abs().max(mult.gamma.abs()).max(f64::MIN_POSITIVE);
            out.complementary_slackness = out
                .complementary_slackness
                .max(beta_rel * (p - cost.p_min).abs() / cost.p_min);
        }

        let terms = [
            w.w1 * crate::semcost::d_server_cycles(s, cost) / cost.f_server,
            w.w1 * crate::semcost::d_user_cycles(s, cost) / cost.g_user,
            w.w2 * crate::semcost::d_utility(s, cost),
            2.0 * w.w1 * u.z * s,
            mult.alpha[k],
        ];
        let rs = terms[0] + terms[1] - terms[2] + terms[3] + terms[4];
        let s_scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        // the size floor is a search bound, not a constraint
        if s > S_FLOOR {
            out.stationarity_s = out.stationarity_s.max(scaled(rs, &terms));
        }
        let alpha_rel = mult.alpha[k] / s_scale.max(f64::MIN_POSITIVE);
        out.complementary_slackness = out
            .complementary_slackness
            .max(alpha_rel * (s - cost.s_max).abs() / cost.s_max);

        out.primal_violation = out
            .primal_violation
            .max((cost.p_min - p).max(0.0) / cost.p_min)
            .max((s - cost.s_max).max(0.0) / cost.s_max);
    }

    let p_sum: f64 = alloc.p.iter().sum();
    let b_sum: f64 = alloc.b.iter().sum();
    out.primal_violation = out
        .primal_violation
        .max((p_sum - scenario.p_total).max(0.0) / scenario.p_total)
        .max((b_sum - scenario.b_total).max(0.0) / scenario.b_total);
    if p_scale > 0.0 {
        out.complementary_slackness = out.complementary_slackness.max(
            mult.gamma / p_scale * (p_sum - scenario.p_total).abs() / scenario.p_total,
        );
    }
    if b_scale > 0.0 {
        out.complementary_slackness = out.complementary_slackness.max(
            mult.xi / b_scale * (b_sum - scenario.b_total).abs() / scenario.b_total,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_scenario, ScenarioSpec};
    use crate::model::check_feasible;
    use crate::solver::{anchors_at, equal_split, update_z};

    fn scenario(n: usize, seed: u64) -> Scenario {
        generate_scenario(&ScenarioSpec {
            n_users: n,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    /// Anchors and auxiliaries of the equal split.
    fn start(sc: &Scenario) -> (Vec<ScaAnchor>, Vec<f64>) {
        let init = equal_split(sc).unwrap();
        let anchors = anchors_at(&init).unwrap();
        let z = update_z(&init, &anchors, sc).unwrap();
        (anchors, z)
    }

    fn first_user<'a>(sc: &'a Scenario, anchors: &[ScaAnchor], z: &[f64]) -> UserProblem<'a> {
        UserProblem::new(&sc.users[0], anchors[0], z[0], sc, &SolverConfig::default())
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn bandwidth_clamps_and_interior_root() {
        let sc = scenario(2, 1);
        let (anchors, z) = start(&sc);
        let u = first_user(&sc, &anchors, &z);
        let p = sc.p_total / 2.0;

        let at_floor = u.bandwidth_marginal(p, B_FLOOR);
        let low = u.solve_b_given(p, 2.0 * at_floor).unwrap();
        assert_eq!((low.b, low.clamp), (B_FLOOR, BandwidthClamp::Floor));
        let high = u.solve_b_given(p, 0.0).unwrap();
        assert_eq!((high.b, high.clamp), (sc.b_total, BandwidthClamp::Cap));

        let xi = u.bandwidth_marginal(p, 0.3 * sc.b_total);
        let mid = u.solve_b_given(p, xi).unwrap();
        assert_eq!(mid.clamp, BandwidthClamp::Interior);
        assert!(rel(u.bandwidth_marginal(p, mid.b), xi) < 1e-8);
        assert!(rel(mid.b, 0.3 * sc.b_total) < 1e-8);
    }

    #[test]
    fn power_clamps_and_interior_root() {
        let sc = scenario(2, 1);
        let (anchors, z) = start(&sc);
        let u = first_user(&sc, &anchors, &z);
        let xi = u.bandwidth_marginal(sc.p_total / 2.0, sc.b_total / 2.0);
        let ends = u.power_endpoints(xi).unwrap();

        let (p, _) = u.solve_p_given(xi, ends.marginal_at_min, &ends).unwrap();
        assert_eq!(p, u.profile.cost.p_min);
        let (p, _) = u.solve_p_given(xi, f64::MIN_POSITIVE, &ends).unwrap();
        assert_eq!(p, sc.p_total);

        let gamma = 0.5 * (ends.marginal_at_min + ends.marginal_at_cap);
        let (p, bs) = u.solve_p_given(xi, gamma, &ends).unwrap();
        assert!(p > u.profile.cost.p_min && p < sc.p_total);
        assert!(rel(u.power_marginal(p, bs.b), gamma) < 1e-8);
        assert_eq!(bs, u.solve_b_given(p, xi).unwrap());
    }

    #[test]
    fn power_price_cases() {
        let config = SolverConfig::default();

        let mut sc = scenario(1, 1);
        sc.p_total = 1e6;
        let (anchors, z) = start(&sc);
        let users = user_problems(&sc, &z, &anchors, &config);
        let a = solve_gamma(&users, 0.0, &sc, &config).unwrap();
        assert_eq!(a.gamma, 0.0);
        assert_eq!(a.p, vec![sc.p_total]);

        let mut sc = scenario(2, 1);
        let (anchors, z) = start(&sc);
        let users = user_problems(&sc, &z, &anchors, &config);
        let xi = users[0].bandwidth_marginal(sc.p_total / 2.0, sc.b_total / 2.0);
        let a = solve_gamma(&users, xi, &sc, &config).unwrap();
        assert!(a.gamma > 0.0);
        let sum: f64 = a.p.iter().sum();
        assert!(sum <= sc.p_total);
        assert!(rel(sum, sc.p_total) < 1e-9);

        let p_min_sum: f64 = sc.users.iter().map(|u| u.cost.p_min).sum();
        sc.p_total = p_min_sum;
        let (anchors, z) = start(&sc);
        let users = user_problems(&sc, &z, &anchors, &config);
        let a = solve_gamma(&users, xi, &sc, &config).unwrap();
        assert!(a.gamma > 0.0);
        assert_eq!(a.p, sc.users.iter().map(|u| u.cost.p_min).collect::<Vec<_>>());
        assert_eq!(a.p.iter().sum::<f64>(), sc.p_total);

        let mut short = sc.clone();
        short.p_total = 0.9 * p_min_sum;
        assert!(matches!(
            solve_gamma(&users, xi, &short, &config),
            Err(Error::InfeasibleScenario(_))
        ));
    }

    #[test]
    fn bandwidth_price_cases() {
        let config = SolverConfig::default();

        let mut sc = scenario(1, 1);
        sc.b_total = 1e9;
        let (anchors, z) = start(&sc);
        let users = user_problems(&sc, &z, &anchors, &config);
        let sol = solve_xi(&users, &sc, &config, None).unwrap();
        assert_eq!(sol.xi, 0.0);
        assert_eq!(sol.priced.b, vec![sc.b_total]);

        let sc = scenario(2, 1);
        let (anchors, z) = start(&sc);
        let users = user_problems(&sc, &z, &anchors, &config);
        let sol = solve_xi(&users, &sc, &config, None).unwrap();
        assert!(sol.xi > 0.0);
        let sum: f64 = sol.priced.b.iter().sum();
        assert!(sum <= sc.b_total);
        assert!(rel(sum, sc.b_total) < 1e-9);
    }

    #[test]
    fn size_root_clamp_and_monotonicity() {
        let config = SolverConfig::default();
        let mut sc = scenario(1, 1);
        sc.weights = crate::model::Weights { w1: 1.0, w2: 0.0 };
        let (anchors, z) = start(&sc);

        let u = first_user(&sc, &anchors, &z);
        let (s, alpha) = solve_s(&u, &sc, &config);
        assert_eq!(alpha, 0.0);
        assert!(s > S_FLOOR && s < u.profile.cost.s_max);
        let scale = 2.0 * u.w1 * u.z * s;
        assert!(u.size_residual(s, &sc).abs() / scale < 1e-8);

        let sc = scenario(1, 1);
        let mut last = f64::INFINITY;
        for k in 0..12 {
            let zk = z[0] * 4f64.powi(k);
            let u = UserProblem::new(&sc.users[0], anchors[0], zk, &sc, &config);
            let (s, _) = solve_s(&u, &sc, &config);
            assert!(s <= last, "z = {zk:e}");
            last = s;
        }

        // cap the size below the unconstrained root
        let u = first_user(&sc, &anchors, &z);
        let (free, _) = solve_s(&u, &sc, &config);
        let mut capped = sc.clone();
        capped.users[0].cost.s_max = free / 2.0;
        let u = first_user(&capped, &anchors, &z);
        let (s, alpha) = solve_s(&u, &capped, &config);
        assert_eq!(s, free / 2.0);
        assert!(alpha > 0.0);
        assert!(rel(alpha, -u.size_residual(s, &capped)) < 1e-12);
    }

    #[test]
    fn single_user_solution_meets_kkt() {
        let config = SolverConfig::default();
        let sc = scenario(1, 1);
        let (anchors, z) = start(&sc);
        let sol = kkt_solve(&z, &anchors, &sc, &config).unwrap();
        assert!(check_feasible(&sol.alloc, &sc).is_ok());
        assert_eq!(sol.alloc.b, vec![sc.b_total]);
        let r = kkt_residuals(&sol.alloc, &sol.multipliers, &z, &anchors, &sc, &config);
        assert!(r.max_residual() < 1e-6, "{r:?}");
    }

    #[test]
    fn identical_users_get_identical_allocations() {
        let config = SolverConfig::default();
        let mut sc = scenario(2, 1);
        sc.users[1] = sc.users[0];
        let (anchors, z) = start(&sc);
        let sol = kkt_solve(&z, &anchors, &sc, &config).unwrap();
        let a = &sol.alloc;
        assert!(rel(a.p[0], a.p[1]) < 1e-9, "{a:?}");
        assert!(rel(a.b[0], a.b[1]) < 1e-9, "{a:?}");
        assert!(rel(a.s[0], a.s[1]) < 1e-9, "{a:?}");
    }

    #[test]
    fn default_scenario_solution_is_feasible_and_stationary() {
        let config = SolverConfig::default();
        let sc = scenario(30, 42);
        let (anchors, z) = start(&sc);
        let sol = kkt_solve(&z, &anchors, &sc, &config).unwrap();
        assert!(check_feasible(&sol.alloc, &sc).is_ok());
        let r = kkt_residuals(&sol.alloc, &sol.multipliers, &z, &anchors, &sc, &config);
        assert!(r.max_residual() < 1e-6, "{r:?}");
        assert!(r.dual_min >= 0.0);
    }

    #[test]
    fn rejects_bad_auxiliaries() {
        let sc = scenario(2, 1);
        let (anchors, _) = start(&sc);
        let config = SolverConfig::default();
        assert!(kkt_solve(&[1.0, 0.0], &anchors, &sc, &config).is_err());
        assert!(kkt_solve(&[1.0], &anchors, &sc, &config).is_err());
    }
}
