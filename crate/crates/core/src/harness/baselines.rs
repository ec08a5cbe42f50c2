use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::channel::B_FLOOR;
use crate::error::{Error, Result};
use crate::model::{check_feasible, Allocation, Scenario};
use crate::semcost::S_FLOOR;

/// Scales `shares` to `budget`, then lifts every entry below its floor to
/// the floor and re-spreads what is left over the others in proportion to
/// their shares, until no entry is below its floor.
fn lift_to_floors(shares: &[f64], floors: &[f64], budget: f64, what: &str) -> Result<Vec<f64>> {
    let floor_sum: f64 = floors.iter().sum();
    if floor_sum > budget {
        return Err(Error::InfeasibleScenario(format!(
            "{what} floors sum to {floor_sum:e}, above the budget {budget:e}"
        )));
    }
    let mut lifted = vec![false; shares.len()];
    loop {
        let left = budget - floors.iter().zip(&lifted).filter(|(_, &l)| l).map(|(f, _)| f).sum::<f64>();
        let weight: f64 = shares.iter().zip(&lifted).filter(|(_, &l)| !l).map(|(s, _)| s).sum();
        let out: Vec<f64> = (0..shares.len())
            .map(|i| if lifted[i] { floors[i] } else { left * shares[i] / weight })
            .collect();
        let mut changed = false;
        for i in 0..shares.len() {
            if !lifted[i] && out[i] < floors[i] {
                lifted[i] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(out);
        }
    }
}

/// Uniform point on the simplex.
fn dirichlet_flat(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

/// Random baseline: sizes uniform in `(S_FLOOR, s_max]`, power and bandwidth
/// split by uniform simplex shares, powers lifted to `p_min`.
pub fn baseline_random(scenario: &Scenario, seed: u64) -> Result<Allocation> {
    let n = scenario.n_users();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = scenario
        .users
        .iter()
        .map(|u| {
            let x: f64 = rng.random();
            u.cost.s_max - x * (u.cost.s_max - S_FLOOR)
        })
        .collect();
    let p_shares = dirichlet_flat(&mut rng, n);
    let b_shares = dirichlet_flat(&mut rng, n);
    let p_min: Vec<f64> = scenario.users.iter().map(|u| u.cost.p_min).collect();
    let alloc = Allocation {
        p: lift_to_floors(&p_shares, &p_min, scenario.p_total, "power")?,
        b: lift_to_floors(&b_shares, &vec![B_FLOOR; n], scenario.b_total, "bandwidth")?,
        s,
    };
    let report = check_feasible(&alloc, scenario);
    if !report.is_ok() {
        return Err(Error::Infeasible(report));
    }
    Ok(alloc)
}

/// Equal baseline: `p_total/N`, `B_total/N` and `s_max/2` for every user.
pub fn baseline_equal(scenario: &Scenario) -> Result<Allocation> {
    let n = scenario.n_users() as f64;
    let share = scenario.p_total / n;
    if let Some((k, u)) = scenario.users.iter().enumerate().find(|(_, u)| share < u.cost.p_min) {
        return Err(Error::InfeasibleScenario(format!(
            "equal power share {share:e} W is below user {k}'s minimum {:e} W",
            u.cost.p_min
        )));
    }
    let alloc = Allocation {
        p: vec![share; scenario.n_users()],
        b: vec![scenario.b_total / n; scenario.n_users()],
        s: scenario.users.iter().map(|u| u.cost.s_max / 2.0).collect(),
    };
    let report = check_feasible(&alloc, scenario);
    if !report.is_ok() {
        return Err(Error::Infeasible(report));
    }
    Ok(alloc)
}
