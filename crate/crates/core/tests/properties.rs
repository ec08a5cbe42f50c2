use proptest::prelude::*;

use secomm::channel::{secrecy_rate, surrogate_rate, ScaAnchor};
use secomm::harness::{baseline_random, generate_scenario, ScenarioSpec};
use secomm::model::check_feasible;
use secomm::oracle::{derivative, StepPolicy};
use secomm::semcost::{size_cost, size_cost_derivative};
use secomm::solver::{anchors_at, equal_split, kkt_residuals, kkt_solve, quad_transform_value, update_z};
use secomm::{Scenario, SolverConfig, Weights};

fn scenario(n: usize, seed: u64) -> Scenario {
    generate_scenario(&ScenarioSpec {
        n_users: n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Log-uniform value on `[10^lo, 10^hi]`.
fn decades(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo..hi).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quad_transform_bounds_ratio(s in decades(0.0, 9.0), r in decades(3.0, 9.0), scale in decades(-3.0, 3.0)) {
        let z_star = 1.0 / (2.0 * r * s);
        let at_star = quad_transform_value(s, r, z_star).unwrap();
        prop_assert!((at_star - s / r).abs() <= 1e-12 * s / r);
        prop_assert!(quad_transform_value(s, r, z_star * scale).unwrap() >= at_star * (1.0 - 1e-15));
    }

    #[test]
    fn surrogate_is_a_tight_concave_minorant(
        seed in 0u64..50,
        user in 0usize..30,
        p_frac in 0.0..1.0f64,
        b in decades(3.0, 7.0),
        b_anchor in decades(3.0, 7.0),
        spread in 0.01..0.99f64,
    ) {
        let sc = scenario(30, seed);
        let u = &sc.users[user];
        let p = u.cost.p_min + p_frac * (sc.p_total - u.cost.p_min);
        let anchor = ScaAnchor::new(b_anchor).unwrap();
        let exact = secrecy_rate(p, b, &u.link).unwrap();
        let surrogate = surrogate_rate(p, b, &u.link, anchor).unwrap();
        prop_assert!(surrogate <= exact + 1e-12 * exact.abs().max(1.0));
        let tight = surrogate_rate(p, b_anchor, &u.link, anchor).unwrap();
        let at_anchor = secrecy_rate(p, b_anchor, &u.link).unwrap();
        prop_assert!((tight - at_anchor).abs() <= 1e-12 * at_anchor.abs().max(1.0));

        // midpoint concavity in B
        let (lo, hi) = (b * spread, b / spread);
        let mid = 0.5 * (lo + hi);
        let f = |x: f64| surrogate_rate(p, x.max(1.0), &u.link, anchor).unwrap();
        prop_assert!(f(mid) >= 0.5 * (f(lo) + f(hi)) - 1e-9 * f(mid).abs().max(1.0));
    }

    #[test]
    fn size_cost_derivative_matches_finite_difference(
        seed in 0u64..20,
        user in 0usize..30,
        s_frac in -3.0..0.0f64,
        w1 in 0.05..0.95f64,
    ) {
        let sc = scenario(30, seed);
        let cost = &sc.users[user].cost;
        let s = cost.s_max * 10f64.powf(s_frac);
        let weights = Weights::new(w1, 1.0 - w1);
        let fd = derivative(|x| size_cost(x, cost, weights), s, 1e3, StepPolicy::default()).unwrap();
        let exact = size_cost_derivative(s, cost, weights);
        prop_assert!((fd.value - exact).abs() <= 1e-6 * exact.abs(), "fd {} vs {}", fd.value, exact);
    }

    #[test]
    fn random_baseline_is_feasible(spec_seed in 0u64..100, draw in any::<u64>(), n in 1usize..40) {
        let sc = scenario(n, spec_seed);
        let a = baseline_random(&sc, draw).unwrap();
        prop_assert!(check_feasible(&a, &sc).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn inner_solution_is_feasible_and_stationary(seed in 0u64..1000, n in 1usize..6, p_dbm in 30.0..40.0f64) {
        let sc = generate_scenario(&ScenarioSpec {
            n_users: n,
            seed,
            p_total_dbm: p_dbm,
            ..Default::default()
        })
        .unwrap();
        let config = SolverConfig::default();
        let init = equal_split(&sc).unwrap();
        let anchors = anchors_at(&init).unwrap();
        let z = update_z(&init, &anchors, &sc).unwrap();
        let sol = kkt_solve(&z, &anchors, &sc, &config).unwrap();
        prop_assert!(check_feasible(&sol.alloc, &sc).is_ok());
        let r = kkt_residuals(&sol.alloc, &sol.multipliers, &z, &anchors, &sc, &config);
        prop_assert!(r.max_residual() <= 1e-6, "{:?}", r);
    }
}
