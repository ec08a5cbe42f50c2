use serde::{Deserialize, Serialize};

use crate::channel::ScaAnchor;
use crate::error::{Error, Result};
use crate::model::{Allocation, Scenario};
use crate::semcost::{objective, user_metrics, Latency, ObjectiveKind};

use super::fp::{fp_with_trace, surrogate_objective};
use super::kkt::{kkt_residuals, KktMultipliers, KktResiduals};
use super::{anchors_at, SolverConfig, SolverState};

/// Unit floors of the convergence norm: 1 mW, 1 kHz, 1 kbit.
const CHANGE_FLOORS: [f64; 3] = [1e-3, 1e3, 1e3];

/// One row of the iteration trace. `j = 0` marks the starting point of an
/// outer iteration evaluated under its fresh anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub j: usize,
    pub surrogate_objective: f64,
    pub exact_objective: f64,
    /// Largest scaled KKT residual of the inner solve; absent at `j = 0`.
    pub max_kkt_residual: Option<f64>,
    pub p: Vec<f64>,
    pub b: Vec<f64>,
    pub s: Vec<f64>,
}

impl TraceRecord {
    pub(crate) fn new(
        k: usize,
        j: usize,
        alloc: &Allocation,
        anchors: &[ScaAnchor],
        scenario: &Scenario,
        kkt: Option<(&[f64], &KktMultipliers)>,
        config: &SolverConfig,
    ) -> Result<Self> {
        Ok(Self {
            k,
            j,
            surrogate_objective: surrogate_objective(alloc, anchors, scenario)?,
            exact_objective: objective(alloc, scenario, ObjectiveKind::Exact)?,
            max_kkt_residual: kkt.map(|(z, m)| {
                kkt_residuals(alloc, m, z, anchors, scenario, config).max_residual()
            }),
            p: alloc.p.clone(),
            b: alloc.b.clone(),
            s: alloc.s.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserReport {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub secrecy_rate: f64,
    pub utility: f64,
}

/// Exact-rate evaluation of an allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub users: Vec<UserReport>,
    pub t_total: f64,
    pub u_total: f64,
    /// Objective with the true secrecy rate.
    pub objective: f64,
}

impl MetricsReport {
    pub fn evaluate(alloc: &Allocation, scenario: &Scenario) -> Result<Self> {
        let objective = objective(alloc, scenario, ObjectiveKind::Exact)?;
        let users: Vec<UserReport> = user_metrics(alloc, scenario, ObjectiveKind::Exact)?
            .into_iter()
            .map(|m| {
                let Latency { t1, t2, t3 } = m.latency;
                UserReport {
                    t1,
                    t2,
                    t3,
                    secrecy_rate: m.rate,
                    utility: m.utility,
                }
            })
            .collect();
        Ok(Self {
            t_total: users.iter().map(|u| u.t1 + u.t2 + u.t3).sum(),
            u_total: users.iter().map(|u| u.utility).sum(),
            objective,
            users,
        })
    }

    /// `w1·T − w2·U` under arbitrary weights.
    pub fn combined(&self, w1: f64, w2: f64) -> f64 {
        w1 * self.t_total - w2 * self.u_total
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub alloc: Allocation,
    pub metrics: MetricsReport,
    /// Surrogate objective at the returned point under its final anchors.
    pub surrogate_objective: f64,
    pub multipliers: KktMultipliers,
    pub residuals: KktResiduals,
    pub state: SolverState,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub iters_outer: usize,
    pub iters_fp_total: usize,
    /// Users whose bandwidth was starved in the final inner solve.
    pub starved: Vec<usize>,
}

/// Deterministic feasible starting point: equal power (lifted to `p_min`),
/// equal bandwidth, half the size cap.
pub fn equal_split(scenario: &Scenario) -> Result<Allocation> {
    let n = scenario.n_users();
    let p_min: Vec<f64> = scenario.users.iter().map(|u| u.cost.p_min).collect();
    let p_min_sum: f64 = p_min.iter().sum();
    if p_min_sum > scenario.p_total {
        return Err(Error::InfeasibleScenario(format!(
            "sum of minimum powers {p_min_sum:e} W exceeds p_total {:e} W",
            scenario.p_total
        )));
    }
    let share = scenario.p_total / n as f64;
    let mut p: Vec<f64> = p_min.iter().map(|&m| share.max(m)).collect();
    let excess: f64 = p.iter().sum::<f64>() - scenario.p_total;
    if excess > 0.0 {
        // shrink the unlifted users proportionally to what they hold above p_min
        let free: f64 = p.iter().zip(&p_min).map(|(a, m)| a - m).sum();
        for (a, m) in p.iter_mut().zip(&p_min) {
            *a = m + (*a - m) * (1.0 - excess / free);
        }
    }
    Ok(Allocation {
        p,
        b: vec![scenario.b_total / n as f64; n],
        s: scenario.users.iter().map(|u| u.cost.s_max / 2.0).collect(),
    })
}

/// Max over (p, B, S) of `|new − old| / max(|old|, unit floor)`.
pub fn relative_change(new: &Allocation, old: &Allocation) -> f64 {
    [(&new.p, &old.p), (&new.b, &old.b), (&new.s, &old.s)]
        .into_iter()
        .zip(CHANGE_FLOORS)
        .flat_map(|((a, b), floor)| {
            a.iter()
                .zip(b.iter())
                .map(move |(x, y)| (x - y).abs() / y.abs().max(floor))
        })
        .fold(0.0, f64::max)
}

/// Runs the outer loop: anchor at the current bandwidths, run fractional
/// programming, repeat until the allocation moves by at most `eps0` or
/// `k_max` iterations have run.
pub fn resource_allocation(
    scenario: &Scenario,
    config: &SolverConfig,
    init: Option<&Allocation>,
) -> Result<SolveOutcome> {
    scenario.validate()?;
    config.validate()?;
    let mut alloc = match init {
        Some(a) => {
            let report = super::check_feasible(a, scenario);
            if !report.is_ok() {
                return Err(Error::Infeasible(report));
            }
            a.clone()
        }
        None => equal_split(scenario)?,
    };

    let mut trace = Vec::new();
    let mut anchors = anchors_at(&alloc)?;
    let mut i_sca = 0;
    let mut iters_fp_total = 0;
    let mut xi_hint = None;
    let mut best: Option<(f64, usize)> = None;
    let mut history = Vec::new();

    for k in 1..=config.k_max {
        if i_sca < config.i_max {
            anchors = anchors_at(&alloc)?;
            i_sca += 1;
        }
        trace.push(TraceRecord::new(k, 0, &alloc, &anchors, scenario, None, config)?);
        let fp = fp_with_trace(&anchors, &alloc, scenario, config, k, Some(&mut trace), xi_hint)?;
        iters_fp_total += fp.iterations;
        xi_hint = (fp.multipliers.xi > 0.0).then_some(fp.multipliers.xi);
        let change = relative_change(&fp.alloc, &alloc);
        log::debug!(
            "outer {k}: {} fp iterations, change {change:.3e}, surrogate {:.6e}",
            fp.iterations,
            trace.last().map_or(f64::NAN, |t| t.surrogate_objective)
        );
        alloc = fp.alloc.clone();
        let exact = objective(&alloc, scenario, ObjectiveKind::Exact)?;
        if best.is_none_or(|(v, _)| exact < v) {
            best = Some((exact, history.len()));
        }
        history.push((fp, anchors.clone(), k));
        if change <= config.eps0 {
            let (fp, anchors, k) = history.pop().expect("just pushed");
            return finish(fp, anchors, k, i_sca, iters_fp_total, trace, true, scenario, config);
        }
    }
    let idx = best.map_or(history.len() - 1, |(_, i)| i);
    let (fp, anchors, k) = history.swap_remove(idx);
    log::warn!("outer loop hit k_max = {} without converging", config.k_max);
    finish(fp, anchors, k, i_sca, iters_fp_total, trace, false, scenario, config)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    fp: super::FpOutcome,
    anchors: Vec<ScaAnchor>,
    k: usize,
    i_sca: usize,
    iters_fp_total: usize,
    trace: Vec<TraceRecord>,
    converged: bool,
    scenario: &Scenario,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    let residuals = kkt_residuals(&fp.alloc, &fp.multipliers, &fp.z, &anchors, scenario, config);
    Ok(SolveOutcome {
        metrics: MetricsReport::evaluate(&fp.alloc, scenario)?,
        surrogate_objective: surrogate_objective(&fp.alloc, &anchors, scenario)?,
        residuals,
        state: SolverState {
            z: fp.z.clone(),
            anchors,
            k_outer: k,
            j_fp: fp.iterations,
            i_sca,
        },
        multipliers: fp.multipliers,
        starved: fp.starved,
        alloc: fp.alloc,
        trace,
        converged,
        iters_outer: k,
        iters_fp_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_scenario, ScenarioSpec};
    use crate::model::{check_feasible, Weights};

    fn scenario(n: usize) -> Scenario {
        generate_scenario(&ScenarioSpec {
            n_users: n,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn equal_split_is_feasible_and_lifts_to_p_min() {
        let mut sc = scenario(4);
        let a = equal_split(&sc).unwrap();
        assert!(check_feasible(&a, &sc).is_ok());
        assert_eq!(a.b, vec![sc.b_total / 4.0; 4]);

        sc.users[0].cost.p_min = 0.4 * sc.p_total;
        let a = equal_split(&sc).unwrap();
        assert_eq!(a.p[0], 0.4 * sc.p_total);
        assert!((a.p.iter().sum::<f64>() - sc.p_total).abs() <= 1e-12 * sc.p_total);
        assert!(check_feasible(&a, &sc).is_ok());
    }

    #[test]
    fn relative_change_uses_unit_floors() {
        let a = Allocation {
            p: vec![1e-4],
            b: vec![1e6],
            s: vec![1e6],
        };
        let mut b = a.clone();
        b.p[0] = 2e-4;
        // 1e-4 W against the 1 mW floor
        assert!((relative_change(&b, &a) - 0.1).abs() < 1e-12);
        b.p[0] = a.p[0];
        b.b[0] = 1.5e6;
        assert!((relative_change(&b, &a) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn converged_solution_restarts_in_one_outer_iteration() {
        let sc = scenario(5);
        let config = SolverConfig::default();
        let first = resource_allocation(&sc, &config, None).unwrap();
        assert!(first.converged);
        let again = resource_allocation(&sc, &config, Some(&first.alloc)).unwrap();
        assert!(again.converged);
        assert_eq!(again.iters_outer, 1);
    }

    #[test]
    fn default_scenario_converges_with_monotone_majorized_trace() {
        let sc = scenario(30);
        let config = SolverConfig::default();
        let out = resource_allocation(&sc, &config, None).unwrap();
        assert!(out.converged && out.iters_outer <= config.k_max);
        assert!(check_feasible(&out.alloc, &sc).is_ok());
        assert!(out.residuals.max_residual() < 1e-6, "{:?}", out.residuals);
        for w in out.trace.windows(2) {
            assert!(
                w[1].surrogate_objective <= w[0].surrogate_objective + 1e-8,
                "k = {}, j = {}",
                w[1].k,
                w[1].j
            );
        }
        for t in &out.trace {
            assert!(t.exact_objective <= t.surrogate_objective + 1e-12 * t.surrogate_objective.abs());
        }
        let w = sc.weights;
        assert!((out.metrics.combined(w.w1, w.w2) - out.trace.last().unwrap().exact_objective).abs() < 1e-9);
    }

    #[test]
    fn scaling_both_weights_leaves_allocation_unchanged() {
        let sc = scenario(5);
        let config = SolverConfig::default();
        let base = resource_allocation(&sc, &config, None).unwrap();
        let w = sc.weights;
        let scaled = sc.with_weights(Weights {
            w1: 3.0 * w.w1,
            w2: 3.0 * w.w2,
        });
        let out = resource_allocation(&scaled, &config, None).unwrap();
        assert!(relative_change(&out.alloc, &base.alloc) < 1e-6);
    }

    #[test]
    fn rejects_infeasible_start() {
        let sc = scenario(2);
        let mut init = equal_split(&sc).unwrap();
        init.b[0] *= 2.0;
        assert!(matches!(
            resource_allocation(&sc, &SolverConfig::default(), Some(&init)),
            Err(Error::Infeasible(_))
        ));
    }
}
