use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_watts, gain_from_loss, noise_psd_watts_per_hz, path_loss_db, LinkParams};
use crate::error::{Error, Result};
use crate::model::{Scenario, UserProfile, Weights};
use crate::semcost::{SemanticCostParams, DEFAULT_C3, DEFAULT_C5};

/// Per-user constants applied identically to every user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UserDefaults {
    pub d_data_bits: f64,
    pub c1: f64,
    pub c2: u32,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub y2_coeff: f64,
    pub f_server_hz: f64,
    pub g_user_hz: f64,
    pub s_max_bits: f64,
    pub p_min_dbm: f64,
}

impl Default for UserDefaults {
    fn default() -> Self {
        Self {
            d_data_bits: 8e8,
            c1: 5e9,
            c2: 2,
            c3: DEFAULT_C3,
            c4: 1.0,
            c5: DEFAULT_C5,
            y2_coeff: 1.0,
            f_server_hz: 10e9,
            g_user_hz: 2e9,
            s_max_bits: 2.4e8,
            p_min_dbm: 0.0,
        }
    }
}

/// How the eavesdropper of each user is parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EavesdropperPolicy {
    /// Eavesdropper SNR-bandwidth product set to `ratio` times the
    /// legitimate one at `p_min`; the secrecy power condition then holds
    /// with margin `1/ratio`.
    RelativeToMinPower { ratio: f64 },
}

impl Default for EavesdropperPolicy {
    fn default() -> Self {
        EavesdropperPolicy::RelativeToMinPower { ratio: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub n_users: usize,
    pub cell_radius_km: f64,
    /// Users are kept at least this far from the base station.
    pub min_distance_km: f64,
    pub seed: u64,
    pub noise_psd_dbm_hz: f64,
    pub shadow_std_db: f64,
    pub b_total_hz: f64,
    pub p_total_dbm: f64,
    pub weights: Weights,
    pub user: UserDefaults,
    pub eavesdropper: EavesdropperPolicy,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_users: 30,
            cell_radius_km: 0.5,
            min_distance_km: 0.035,
            seed: 1,
            noise_psd_dbm_hz: -174.0,
            shadow_std_db: 8.0,
            b_total_hz: 10e6,
            p_total_dbm: 40.0,
            weights: Weights::new(0.5, 0.5),
            user: UserDefaults::default(),
            eavesdropper: EavesdropperPolicy::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Invalid("n_users must be at least 1".into()));
        }
        if !(self.cell_radius_km > 0.0
            && self.min_distance_km > 0.0
            && self.min_distance_km < self.cell_radius_km)
        {
            return Err(Error::Invalid(
                "need 0 < min_distance_km < cell_radius_km".into(),
            ));
        }
        if !(self.shadow_std_db >= 0.0) {
            return Err(Error::Invalid("shadow_std_db must be non-negative".into()));
        }
        if !(self.b_total_hz > 0.0) {
            return Err(Error::Invalid("b_total must be positive".into()));
        }
        let EavesdropperPolicy::RelativeToMinPower { ratio } = self.eavesdropper;
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Invalid("eavesdropper ratio must lie in [0, 1]".into()));
        }
        self.weights.validate()
    }
}

/// Drops users uniformly in an annulus around the base station, applies
/// path loss and log-normal shadowing, and fills in the per-user constants.
/// The random draws do not depend on the budgets, so specs differing only in
/// budgets or size caps produce the same geometry.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shadow = Normal::new(0.0, spec.shadow_std_db)
        .map_err(|e| Error::Invalid(format!("shadow fading: {e}")))?;
    let noise_var = noise_psd_watts_per_hz(spec.noise_psd_dbm_hz);
    let u = &spec.user;
    let p_min = dbm_to_watts(u.p_min_dbm);
    let (r0, r1) = (spec.min_distance_km, spec.cell_radius_km);

    let mut users = Vec::with_capacity(spec.n_users);
    for _ in 0..spec.n_users {
        let area: f64 = rng.random();
        let distance = (r0 * r0 + area * (r1 * r1 - r0 * r0)).sqrt();
        let shadow_db = shadow.sample(&mut rng);
        let h = gain_from_loss(path_loss_db(distance)?, shadow_db);
        let EavesdropperPolicy::RelativeToMinPower { ratio } = spec.eavesdropper;
        let link = LinkParams {
            h,
            noise_var,
            eve_p: p_min,
            eve_h: ratio * h,
            eve_noise_var: noise_var,
        };
        let cost = SemanticCostParams {
            d_data: u.d_data_bits,
            c1: u.c1,
            c2: u.c2,
            c3: u.c3,
            c4: u.c4,
            c5: u.c5,
            y2_coeff: u.y2_coeff,
            f_server: u.f_server_hz,
            g_user: u.g_user_hz,
            s_max: u.s_max_bits,
            p_min,
        };
        users.push(UserProfile { link, cost });
    }
    let scenario = Scenario {
        users,
        p_total: dbm_to_watts(spec.p_total_dbm),
        b_total: spec.b_total_hz,
        weights: spec.weights,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scenario() {
        let spec = ScenarioSpec::default();
        assert_eq!(generate_scenario(&spec).unwrap(), generate_scenario(&spec).unwrap());
        let other = ScenarioSpec {
            seed: 2,
            ..spec.clone()
        };
        assert_ne!(generate_scenario(&spec).unwrap(), generate_scenario(&other).unwrap());
    }

    #[test]
    fn default_scenario_meets_secrecy_condition_for_every_user() {
        let s = generate_scenario(&ScenarioSpec::default()).unwrap();
        assert_eq!(s.n_users(), 30);
        for u in &s.users {
            assert!(u.cost.p_min >= u.link.secrecy_power_threshold());
            assert!((u.link.secrecy_power_threshold() / u.cost.p_min - 0.1).abs() < 1e-12);
        }
        assert!((s.p_total - 10.0).abs() < 1e-12);
        assert_eq!(s.b_total, 1e7);
    }

    #[test]
    fn budgets_do_not_change_geometry() {
        let a = generate_scenario(&ScenarioSpec::default()).unwrap();
        let spec = ScenarioSpec {
            p_total_dbm: 31.0,
            b_total_hz: 6e6,
            ..Default::default()
        };
        let b = generate_scenario(&spec).unwrap();
        for (x, y) in a.users.iter().zip(&b.users) {
            assert_eq!(x.link, y.link);
        }
    }

    #[test]
    fn noise_density_default() {
        let s = generate_scenario(&ScenarioSpec::default()).unwrap();
        let n0 = s.users[0].link.noise_var;
        assert!((n0 / 3.981_071_705_534_972e-21 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        let spec = ScenarioSpec {
            n_users: 0,
            ..Default::default()
        };
        assert!(generate_scenario(&spec).is_err());
        let spec = ScenarioSpec {
            p_total_dbm: -10.0, // 0.1 mW for 30 users at 1 mW each
            ..Default::default()
        };
        assert!(matches!(generate_scenario(&spec), Err(Error::InfeasibleScenario(_))));
    }
}
