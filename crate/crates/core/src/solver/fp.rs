use crate::channel::{surrogate_rate, ScaAnchor};
use crate::error::{Error, Result};
use crate::model::{Allocation, Scenario};
use crate::semcost::{objective, ObjectiveKind};

use super::kkt::{kkt_solve_hinted, KktMultipliers};
use super::sca::TraceRecord;
use super::SolverConfig;

/// Quadratic transform of the ratio `s/r`: `s²·z + 1/(4·r²·z)`. Its minimum
/// over `z > 0` is `s/r`, attained at `z = 1/(2·r·s)`.
pub fn quad_transform_value(s: f64, r: f64, z: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::domain("s", s, "must be positive"));
    }
    if !(r > 0.0) {
        return Err(Error::domain("r", r, "rate must be positive"));
    }
    if !(z > 0.0) {
        return Err(Error::domain("z", z, "auxiliary must be positive"));
    }
    Ok(s * s * z + 1.0 / (4.0 * r * r * z))
}

/// Optimal auxiliaries `z_n = 1/(2·R_n·S_n)` for the current point.
pub fn update_z(alloc: &Allocation, anchors: &[ScaAnchor], scenario: &Scenario) -> Result<Vec<f64>> {
    scenario
        .users
        .iter()
        .enumerate()
        .map(|(n, u)| {
            let r = surrogate_rate(alloc.p[n], alloc.b[n], &u.link, anchors[n])?;
            if !(r > 0.0) {
                return Err(Error::NonPositiveRate { user: n, rate: r });
            }
            let s = alloc.s[n];
            if !(s > 0.0) {
                return Err(Error::domain("s", s, "semantic size must be positive"));
            }
            Ok(1.0 / (2.0 * r * s))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FpOutcome {
    pub alloc: Allocation,
    /// Auxiliaries the returned allocation was solved with.
    pub z: Vec<f64>,
    pub multipliers: KktMultipliers,
    pub iterations: usize,
    pub converged: bool,
    pub starved: Vec<usize>,
}

fn max_rel_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max)
}

/// Alternates the closed-form `z` update with the inner KKT solve until `z`
/// settles to `bisect_tol` or `j_max` solves have run.
pub fn fractional_programming(
    anchors: &[ScaAnchor],
    init: &Allocation,
    scenario: &Scenario,
    config: &SolverConfig,
) -> Result<FpOutcome> {
    fp_with_trace(anchors, init, scenario, config, 0, None, None)
}

pub(crate) fn fp_with_trace(
    anchors: &[ScaAnchor],
    init: &Allocation,
    scenario: &Scenario,
    config: &SolverConfig,
    k_outer: usize,
    mut trace: Option<&mut Vec<TraceRecord>>,
    xi_hint: Option<f64>,
) -> Result<FpOutcome> {
    let mut z = update_z(init, anchors, scenario)?;
    let mut hint = xi_hint;
    let mut j = 0;
    loop {
        j += 1;
        let sol = kkt_solve_hinted(&z, anchors, scenario, config, hint)?;
        hint = (sol.multipliers.xi > 0.0).then_some(sol.multipliers.xi);
        let z_next = update_z(&sol.alloc, anchors, scenario)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRecord::new(k_outer, j, &sol.alloc, anchors, scenario, Some((&z, &sol.multipliers)), config)?);
        }
        let converged = max_rel_change(&z_next, &z) < config.bisect_tol;
        if converged || j >= config.j_max {
            return Ok(FpOutcome {
                alloc: sol.alloc,
                z,
                multipliers: sol.multipliers,
                iterations: j,
                converged,
                starved: sol.starved,
            });
        }
        z = z_next;
    }
}

/// P2 objective of `alloc` under `anchors`.
pub(crate) fn surrogate_objective(alloc: &Allocation, anchors: &[ScaAnchor], scenario: &Scenario) -> Result<f64> {
    objective(alloc, scenario, ObjectiveKind::Surrogate(anchors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_transform_examples() {
        assert_eq!(quad_transform_value(1.0, 1.0, 0.5).unwrap(), 1.0);
        assert_eq!(quad_transform_value(1.0, 1.0, 1.0).unwrap(), 1.25);
        assert!(quad_transform_value(1.0, 0.0, 1.0).is_err());
        assert!(quad_transform_value(1.0, 1.0, 0.0).is_err());
        assert!(quad_transform_value(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn dense_z_grid_never_beats_closed_form() {
        let (s, r) = (3.7e6, 2.2e6);
        let z_star = 1.0 / (2.0 * r * s);
        let best = quad_transform_value(s, r, z_star).unwrap();
        assert!(((best - s / r) / (s / r)).abs() < 1e-12);
        // log grid over four decades around z*
        let grid_min = (0..=4000)
            .map(|i| z_star * 10f64.powf(-2.0 + 4.0 * i as f64 / 4000.0))
            .map(|z| quad_transform_value(s, r, z).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(grid_min >= best * (1.0 - 1e-12));
        assert!(grid_min <= best * (1.0 + 1e-5));
    }

    use crate::harness::{baseline_random, generate_scenario, ScenarioSpec};
    use crate::solver::{anchors_at, equal_split};

    fn scenario(n: usize) -> Scenario {
        generate_scenario(&ScenarioSpec {
            n_users: n,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn z_matches_square_root_of_ratio() {
        let sc = scenario(30);
        for seed in 0..20 {
            let alloc = baseline_random(&sc, seed).unwrap();
            let anchors = anchors_at(&alloc).unwrap();
            let z = update_z(&alloc, &anchors, &sc).unwrap();
            for (n, u) in sc.users.iter().enumerate() {
                let r = surrogate_rate(alloc.p[n], alloc.b[n], &u.link, anchors[n]).unwrap();
                let g = 1.0 / (4.0 * r * r);
                let f = alloc.s[n] * alloc.s[n];
                let direct = (g / f).sqrt();
                assert!(((z[n] - direct) / direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn z_rejects_zero_size() {
        let sc = scenario(2);
        let mut alloc = equal_split(&sc).unwrap();
        let anchors = anchors_at(&alloc).unwrap();
        alloc.s[1] = 0.0;
        assert!(update_z(&alloc, &anchors, &sc).is_err());
    }

    #[test]
    fn converged_point_is_a_fixed_point() {
        let sc = scenario(5);
        // z settles linearly, so give it room to reach the tolerance
        let config = SolverConfig {
            j_max: 500,
            ..Default::default()
        };
        let init = equal_split(&sc).unwrap();
        let anchors = anchors_at(&init).unwrap();
        let first = fractional_programming(&anchors, &init, &sc, &config).unwrap();
        assert!(first.converged);
        assert!(first.iterations > 1);
        let again = fractional_programming(&anchors, &first.alloc, &sc, &config).unwrap();
        assert!(again.converged);
        assert_eq!(again.iterations, 1);
    }

    #[test]
    fn surrogate_objective_never_increases() {
        let sc = scenario(30);
        let config = SolverConfig::default();
        let init = equal_split(&sc).unwrap();
        let anchors = anchors_at(&init).unwrap();
        let mut trace = Vec::new();
        let out = fp_with_trace(&anchors, &init, &sc, &config, 1, Some(&mut trace), None).unwrap();
        assert!(out.iterations <= config.j_max);
        let mut last = surrogate_objective(&init, &anchors, &sc).unwrap();
        for t in &trace {
            assert!(t.surrogate_objective <= last + 1e-8, "j = {}", t.j);
            last = t.surrogate_objective;
        }
    }
}
