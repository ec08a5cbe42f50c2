//! Brute-force checks for small instances, built only on the `channel` and
//! `semcost` primitives so that they stay independent of the solver.

use rayon::prelude::*;

use crate::channel::{surrogate_rate, ScaAnchor, B_FLOOR};
use crate::error::{Error, Result};
use crate::model::{Allocation, Scenario};
use crate::semcost::{size_cost, S_FLOOR};

/// Upper bound on the number of grid combinations a search may cover.
pub const GRID_GUARD: f64 = 1e8;

/// How the auxiliaries enter the grid objective.
#[derive(Debug, Clone, PartialEq)]
pub enum ZPolicy {
    /// `z_n = 1/(2·R_n·S_n)` at every point, so the value is the ratio form.
    Optimal,
    /// Quadratic-transform value at the given auxiliaries.
    Fixed(Vec<f64>),
}

/// Which variables are gridded. Variables left out are held at
/// [`GridSpec::base`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridAxes {
    pub p: bool,
    pub b: bool,
    pub s: bool,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            p: true,
            b: true,
            s: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub axes: GridAxes,
    /// The size axis is log-spaced over this many decades below `s_max`.
    pub size_decades: f64,
    /// Budget fractions below 1 sampled on a coarse sub-grid, so that
    /// activeness of the budgets is checked rather than assumed.
    pub slack_levels: Vec<f64>,
    /// Run one refinement pass around the best point.
    pub refine: bool,
    pub base: Option<Allocation>,
}

impl GridSpec {
    pub fn new(points_per_axis: usize) -> Self {
        Self {
            points_per_axis,
            axes: GridAxes::default(),
            size_decades: 3.0,
            slack_levels: vec![0.5, 0.8],
            refine: true,
            base: None,
        }
    }

    fn coarse_points(&self) -> usize {
        (self.points_per_axis / 4).max(3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub alloc: Allocation,
    pub value: f64,
    /// Grid combinations covered, counting every size combination.
    pub combinations: f64,
}

/// Candidate values of one resource for all users.
struct Axis {
    points: Vec<Vec<f64>>,
    /// Simplex coordinates of each point, used to refine around it.
    coords: Vec<Vec<f64>>,
}

/// Share vectors on the simplex with `k` points per axis.
fn simplex(n: usize, k: usize) -> Vec<Vec<f64>> {
    let steps = k - 1;
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, steps: usize, out: &mut Vec<Vec<f64>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.iter().map(|&j| j as f64 / steps as f64).collect());
            return;
        }
        for j in 0..=left {
            cur[i] = j;
            rec(i + 1, left - j, cur, steps, out);
        }
    }
    rec(0, steps, &mut cur, steps, &mut out);
    out
}

/// Share vectors in a box of half-width `half` around `center`, restricted
/// to the simplex.
fn simplex_near(center: &[f64], half: f64, k: usize) -> Vec<Vec<f64>> {
    let n = center.len();
    if n == 1 {
        return vec![vec![1.0]];
    }
    let offsets: Vec<f64> = (0..k)
        .map(|t| -half + 2.0 * half * t as f64 / (k - 1) as f64)
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n - 1];
    loop {
        let mut u: Vec<f64> = (0..n - 1).map(|i| center[i] + offsets[idx[i]]).collect();
        let last = 1.0 - u.iter().sum::<f64>();
        if u.iter().all(|&x| x >= -1e-12) && last >= -1e-12 {
            u.iter_mut().for_each(|x| *x = x.max(0.0));
            u.push(last.max(0.0));
            out.push(u);
        }
        let mut i = 0;
        loop {
            if i == n - 1 {
                return out;
            }
            idx[i] += 1;
            if idx[i] < k {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Maps shares to a resource vector: `floor_n + u_n·(budget − Σ floor)`.
fn spread(shares: Vec<Vec<f64>>, floors: &[f64], budget: f64) -> Axis {
    let free = budget - floors.iter().sum::<f64>();
    Axis {
        points: shares
            .iter()
            .map(|u| u.iter().zip(floors).map(|(x, f)| f + x * free).collect())
            .collect(),
        coords: shares,
    }
}

fn fixed_axis(values: &[f64]) -> Axis {
    Axis {
        points: vec![values.to_vec()],
        coords: vec![vec![]],
    }
}

fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..k)
        .map(|t| (a + (b - a) * t as f64 / (k - 1) as f64).exp())
        .map(|s| s.clamp(lo, hi))
        .collect()
}

struct Best {
    value: f64,
    p: usize,
    b: usize,
    s: Vec<usize>,
}

/// Exhaustive minimum over `p_axis × b_axis × Π s_axes`. Sizes are
/// minimized per user for each (p, B) pair, which covers every combination
/// because no constraint couples them.
fn sweep(
    p_axis: &Axis,
    b_axis: &Axis,
    s_axes: &[Vec<f64>],
    scenario: &Scenario,
    anchors: &[ScaAnchor],
    z: &ZPolicy,
) -> Result<Option<Best>> {
    let w1 = scenario.weights.w1;
    let size_costs: Vec<Vec<f64>> = s_axes
        .iter()
        .zip(&scenario.users)
        .map(|(ss, u)| ss.iter().map(|&s| size_cost(s, &u.cost, scenario.weights)).collect())
        .collect();
    let per_p: Vec<Result<Option<Best>>> = (0..p_axis.points.len())
        .into_par_iter()
        .map(|ip| {
            let p = &p_axis.points[ip];
            let mut best: Option<Best> = None;
            'b: for (ib, b) in b_axis.points.iter().enumerate() {
                let mut total = 0.0;
                let mut picks = Vec::with_capacity(p.len());
                for (n, u) in scenario.users.iter().enumerate() {
                    let r = surrogate_rate(p[n], b[n], &u.link, anchors[n])?;
                    if !(r > 0.0) {
                        continue 'b;
                    }
                    let (mut v_n, mut i_n) = (f64::INFINITY, 0);
                    for (is, &s) in s_axes[n].iter().enumerate() {
                        let ratio = match z {
                            ZPolicy::Optimal => s / r,
                            ZPolicy::Fixed(z) => s * s * z[n] + 1.0 / (4.0 * r * r * z[n]),
                        };
                        let v = size_costs[n][is] + w1 * ratio;
                        if v < v_n {
                            (v_n, i_n) = (v, is);
                        }
                    }
                    total += v_n;
                    picks.push(i_n);
                }
                if !total.is_finite() {
                    return Err(Error::NonFinite { at: p.iter().chain(b).copied().collect() });
                }
                if best.as_ref().is_none_or(|bst| total < bst.value) {
                    best = Some(Best {
                        value: total,
                        p: ip,
                        b: ib,
                        s: picks,
                    });
                }
            }
            Ok(best)
        })
        .collect();
    // reduce in index order: the lowest grid index wins ties
    let mut best: Option<Best> = None;
    for cand in per_p {
        if let Some(c) = cand? {
            if best.as_ref().is_none_or(|b| c.value < b.value) {
                best = Some(c);
            }
        }
    }
    Ok(best)
}

/// Minimizes the surrogate objective over a grid of feasible allocations.
///
/// Budgets are handled by enumerating splits of the full budget on the
/// simplex, plus splits of reduced budgets (`slack_levels`) on a coarse
/// sub-grid. The best point is then refined once on a grid of the same size
/// spanning one cell around it.
pub fn grid_search(
    scenario: &Scenario,
    anchors: &[ScaAnchor],
    z_policy: &ZPolicy,
    grid: &GridSpec,
) -> Result<GridResult> {
    scenario.validate()?;
    let n = scenario.n_users();
    if n > 3 {
        return Err(Error::TooManyUsers(n));
    }
    if anchors.len() != n {
        return Err(Error::Invalid(format!("{} anchors for {n} users", anchors.len())));
    }
    if let ZPolicy::Fixed(z) = z_policy {
        if z.len() != n || z.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Invalid("need one positive auxiliary per user".into()));
        }
    }
    let k = grid.points_per_axis;
    if k < 3 {
        return Err(Error::Invalid("points_per_axis must be at least 3".into()));
    }
    let all = grid.axes.p && grid.axes.b && grid.axes.s;
    let base = match &grid.base {
        Some(b) if b.len() == n => Some(b),
        Some(_) => return Err(Error::Invalid("base allocation has the wrong length".into())),
        None if all => None,
        None => return Err(Error::Invalid("a base allocation is needed for fixed axes".into())),
    };

    let p_floors: Vec<f64> = scenario.users.iter().map(|u| u.cost.p_min).collect();
    let b_floors = vec![B_FLOOR; n];
    let s_lo = |s_max: f64| (s_max * 10f64.powf(-grid.size_decades)).max(S_FLOOR);
    let size_axes = |k: usize| -> Vec<Vec<f64>> {
        scenario
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| match base {
                Some(b) if !grid.axes.s => vec![b.s[i]],
                _ => log_grid(s_lo(u.cost.s_max), u.cost.s_max, k),
            })
            .collect()
    };
    let p_fixed = base.filter(|_| !grid.axes.p).map(|b| &b.p);
    let b_fixed = base.filter(|_| !grid.axes.b).map(|b| &b.b);
    let axis = |fixed: Option<&Vec<f64>>, floors: &[f64], budget: f64, k: usize| match fixed {
        Some(v) => fixed_axis(v),
        None => spread(simplex(n, k), floors, budget),
    };

    // (p fraction, B fraction, points per axis) of every pass before refinement
    let coarse = grid.coarse_points();
    let mut levels = vec![(1.0, 1.0, k)];
    let fractions: Vec<f64> = std::iter::once(1.0).chain(grid.slack_levels.iter().copied()).collect();
    for &fp in &fractions {
        for &fb in &fractions {
            if (fp, fb) != (1.0, 1.0) && (fp == 1.0 || grid.axes.p) && (fb == 1.0 || grid.axes.b) {
                levels.push((fp, fb, coarse));
            }
        }
    }

    let mut combos = 0.0;
    let count = |p: &Axis, b: &Axis, s: &[Vec<f64>]| -> f64 {
        p.points.len() as f64 * b.points.len() as f64 * s.iter().map(|v| v.len() as f64).product::<f64>()
    };
    let mut passes = Vec::new();
    for &(fp, fb, kk) in &levels {
        let p_budget = fp * scenario.p_total;
        let b_budget = fb * scenario.b_total;
        if p_budget < p_floors.iter().sum::<f64>() || b_budget < n as f64 * B_FLOOR {
            continue;
        }
        let p_axis = axis(p_fixed, &p_floors, p_budget, kk);
        let b_axis = axis(b_fixed, &b_floors, b_budget, kk);
        let s_axes = size_axes(kk);
        combos += count(&p_axis, &b_axis, &s_axes);
        passes.push((p_budget, b_budget, kk, p_axis, b_axis, s_axes));
    }
    // refinement repeats the full-resolution pass
    let planned = if grid.refine { combos + count(&passes[0].3, &passes[0].4, &passes[0].5) } else { combos };
    if planned > GRID_GUARD {
        return Err(Error::GridTooLarge {
            points: planned,
            limit: GRID_GUARD,
        });
    }

    let mut best: Option<(Best, usize)> = None;
    for (i, (_, _, _, p_axis, b_axis, s_axes)) in passes.iter().enumerate() {
        if let Some(c) = sweep(p_axis, b_axis, s_axes, scenario, anchors, z_policy)? {
            if best.as_ref().is_none_or(|(b, _)| c.value < b.value) {
                best = Some((c, i));
            }
        }
    }
    let (mut top, pass) = best.ok_or_else(|| {
        Error::InfeasibleScenario("no grid point has a positive rate for every user".into())
    })?;
    let (p_budget, b_budget, kk, p_axis, b_axis, s_axes) = &passes[pass];
    let mut alloc = Allocation {
        p: p_axis.points[top.p].clone(),
        b: b_axis.points[top.b].clone(),
        s: top.s.iter().enumerate().map(|(u, &i)| s_axes[u][i]).collect(),
    };

    if grid.refine {
        let half = 1.0 / (*kk - 1) as f64;
        let p_ref = if p_axis.coords[top.p].is_empty() {
            fixed_axis(&alloc.p)
        } else {
            spread(simplex_near(&p_axis.coords[top.p], half, k), &p_floors, *p_budget)
        };
        let b_ref = if b_axis.coords[top.b].is_empty() {
            fixed_axis(&alloc.b)
        } else {
            spread(simplex_near(&b_axis.coords[top.b], half, k), &b_floors, *b_budget)
        };
        let s_ref: Vec<Vec<f64>> = s_axes
            .iter()
            .zip(&alloc.s)
            .zip(&scenario.users)
            .map(|((axis, &s), u)| {
                if axis.len() == 1 {
                    return vec![s];
                }
                let ratio = (axis[1] / axis[0]).max(1.0 + 1e-12);
                log_grid((s / ratio).max(axis[0]), (s * ratio).min(u.cost.s_max), k)
            })
            .collect();
        combos += count(&p_ref, &b_ref, &s_ref);
        if let Some(c) = sweep(&p_ref, &b_ref, &s_ref, scenario, anchors, z_policy)? {
            if c.value < top.value {
                alloc = Allocation {
                    p: p_ref.points[c.p].clone(),
                    b: b_ref.points[c.b].clone(),
                    s: c.s.iter().enumerate().map(|(u, &i)| s_ref[u][i]).collect(),
                };
                top = c;
            }
        }
    }
    Ok(GridResult {
        alloc,
        value: top.value,
        combinations: combos,
    })
}

/// A derivative estimate and the size of its last correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub value: f64,
    pub error: f64,
}

/// Step of coordinate `i`: `max(relative·|x_i|, absolute·units[i])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            relative: 1e-6,
            absolute: 1e-9,
        }
    }
}

impl StepPolicy {
    /// Relative step near `ε^(1/5)`, which balances the truncation error of
    /// the extrapolated difference against rounding. The default step is
    /// rounding-limited on functions that are nearly flat relative to their
    /// size, such as the eavesdropper rate at large bandwidth.
    pub fn balanced() -> Self {
        Self {
            relative: 1e-3,
            ..Self::default()
        }
    }

    fn step(&self, x: f64, unit: f64) -> f64 {
        (self.relative * x.abs()).max(self.absolute * unit)
    }
}

/// Central-difference gradient of `f` at `x`. The estimate is
/// Richardson-extrapolated from steps `h` and `h/2`, and the error is the
/// size of that correction, which does not account for rounding.
pub fn finite_diff<F>(f: F, x: &[f64], units: &[f64], step: StepPolicy) -> Result<Vec<Derivative>>
where
    F: Fn(&[f64]) -> f64,
{
    if units.len() != x.len() {
        return Err(Error::Invalid("need one unit per coordinate".into()));
    }
    if !(step.relative > 0.0 && step.absolute > 0.0) {
        return Err(Error::Invalid("steps must be positive".into()));
    }
    let mut pt = x.to_vec();
    let mut eval = |i: usize, at: f64| -> Result<f64> {
        pt[i] = at;
        let v = f(&pt);
        pt[i] = x[i];
        if v.is_finite() {
            Ok(v)
        } else {
            let mut at_pt = x.to_vec();
            at_pt[i] = at;
            Err(Error::NonFinite { at: at_pt })
        }
    };
    (0..x.len())
        .map(|i| {
            let h = step.step(x[i], units[i]);
            let d1 = (eval(i, x[i] + h)? - eval(i, x[i] - h)?) / (2.0 * h);
            let d2 = (eval(i, x[i] + h / 2.0)? - eval(i, x[i] - h / 2.0)?) / h;
            let value = (4.0 * d2 - d1) / 3.0;
            Ok(Derivative {
                value,
                error: (value - d2).abs(),
            })
        })
        .collect()
}

/// [`finite_diff`] of a scalar function.
pub fn derivative<F: Fn(f64) -> f64>(f: F, x: f64, unit: f64, step: StepPolicy) -> Result<Derivative> {
    Ok(finite_diff(|v| f(v[0]), &[x], &[unit], step)?[0])
}
