//! Command-line front end. Exit codes: 0 success, 1 error, 2 solver did not
//! converge.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::channel::watts_to_dbm;
use crate::error::{Error, Result};
use crate::harness::{
    generate_scenario, now_utc, parse_range, persist, sweep, EavesdropperPolicy, Manifest, ScenarioSpec, SweepAxis,
    SweepOptions, UserDefaults, BITS_PER_MBYTE,
};
use crate::model::{check_feasible, Weights};
use crate::oracle::{grid_search, GridSpec, ZPolicy};
use crate::semcost::{DEFAULT_C3, DEFAULT_C5};
use crate::solver::{resource_allocation, SolveOutcome, SolverConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;

/// Largest scaled KKT residual `verify` accepts.
pub const VERIFY_KKT_TOL: f64 = 1e-6;
/// Relative margin by which `verify` lets the solver trail the grid search.
pub const VERIFY_GRID_MARGIN: f64 = 0.02;
pub const VERIFY_GRID_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub n_users: usize,
    pub cell_radius_km: f64,
    pub min_distance_km: f64,
    pub seed: u64,
    pub noise_psd_dbm_hz: f64,
    pub shadow_std_db: f64,
    pub b_total_mhz: f64,
    pub p_total_dbm: f64,
    pub w1: f64,
    pub w2: f64,
    /// Eavesdropper SNR product as a fraction of the legitimate one at p_min.
    pub eavesdropper_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UserSection {
    pub d_data_mbytes: f64,
    pub c1: f64,
    pub c2: u32,
    pub c3: f64,
    pub c4: f64,
    pub c5_per_bit: f64,
    pub y2_coeff: f64,
    pub f_server_ghz: f64,
    pub g_user_ghz: f64,
    pub s_max_mbytes: f64,
    pub p_min_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub random_seeds: usize,
    pub threads: Option<usize>,
    pub timing_in_csv: bool,
}

/// The TOML run configuration. Every section and key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub scenario: ScenarioSection,
    pub user: UserSection,
    pub solver: SolverConfig,
    pub sweep: SweepSection,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = ScenarioSpec::default();
        let EavesdropperPolicy::RelativeToMinPower { ratio } = s.eavesdropper;
        Self {
            n_users: s.n_users,
            cell_radius_km: s.cell_radius_km,
            min_distance_km: s.min_distance_km,
            seed: s.seed,
            noise_psd_dbm_hz: s.noise_psd_dbm_hz,
            shadow_std_db: s.shadow_std_db,
            b_total_mhz: s.b_total_hz / 1e6,
            p_total_dbm: s.p_total_dbm,
            w1: s.weights.w1,
            w2: s.weights.w2,
            eavesdropper_ratio: ratio,
        }
    }
}

impl Default for UserSection {
    fn default() -> Self {
        let u = UserDefaults::default();
        Self {
            d_data_mbytes: u.d_data_bits / BITS_PER_MBYTE,
            c1: u.c1,
            c2: u.c2,
            c3: DEFAULT_C3,
            c4: u.c4,
            c5_per_bit: DEFAULT_C5,
            y2_coeff: u.y2_coeff,
            f_server_ghz: u.f_server_hz / 1e9,
            g_user_ghz: u.g_user_hz / 1e9,
            s_max_mbytes: u.s_max_bits / BITS_PER_MBYTE,
            p_min_dbm: u.p_min_dbm,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        let o = SweepOptions::default();
        Self {
            random_seeds: o.random_seeds,
            threads: o.threads,
            timing_in_csv: o.timing_in_csv,
        }
    }
}

impl RunConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        let (s, u) = (&self.scenario, &self.user);
        ScenarioSpec {
            n_users: s.n_users,
            cell_radius_km: s.cell_radius_km,
            min_distance_km: s.min_distance_km,
            seed: s.seed,
            noise_psd_dbm_hz: s.noise_psd_dbm_hz,
            shadow_std_db: s.shadow_std_db,
            b_total_hz: s.b_total_mhz * 1e6,
            p_total_dbm: s.p_total_dbm,
            weights: Weights::new(s.w1, s.w2),
            user: UserDefaults {
                d_data_bits: u.d_data_mbytes * BITS_PER_MBYTE,
                c1: u.c1,
                c2: u.c2,
                c3: u.c3,
                c4: u.c4,
                c5: u.c5_per_bit,
                y2_coeff: u.y2_coeff,
                f_server_hz: u.f_server_ghz * 1e9,
                g_user_hz: u.g_user_ghz * 1e9,
                s_max_bits: u.s_max_mbytes * BITS_PER_MBYTE,
                p_min_dbm: u.p_min_dbm,
            },
            eavesdropper: EavesdropperPolicy::RelativeToMinPower {
                ratio: s.eavesdropper_ratio,
            },
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            random_seeds: self.sweep.random_seeds,
            threads: self.sweep.threads,
            timing_in_csv: self.sweep.timing_in_csv,
            ..Default::default()
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "secomm", version, about = "Secure semantic-communication resource allocation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one scenario and write the allocation, metrics and trace.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Output JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one budget and write a CSV plus a JSON manifest.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// p_total_dbm, b_total_mhz or s_max_mbytes.
        #[arg(long)]
        axis: String,
        /// Axis values as lo:hi:step.
        #[arg(long)]
        values: String,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check a small instance against grid search and the KKT conditions.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Write the generated scenario as JSON.
    GenScenario {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to every core.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
}

impl Common {
    /// The configuration file with command-line overrides applied.
    pub fn resolve(&self) -> Result<RunConfigFile> {
        let mut cfg = match &self.config {
            Some(p) => RunConfigFile::load(p)?,
            None => RunConfigFile::default(),
        };
        if let Some(s) = self.seed {
            cfg.scenario.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.sweep.threads = Some(t);
        }
        if let Some(e) = self.eps0 {
            cfg.solver.eps0 = e;
        }
        if let Some(k) = self.k_max {
            cfg.solver.k_max = k;
        }
        Ok(cfg)
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Invalid(format!("json: {e}")))?;
    match out {
        Some(p) => fs::write(p, json + "\n").map_err(|e| Error::io(p, e)),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SolveReport<'a> {
    spec: &'a ScenarioSpec,
    config: &'a SolverConfig,
    #[serde(flatten)]
    outcome: &'a SolveOutcome,
}

pub fn cmd_solve(common: &Common, out: Option<&Path>) -> Result<u8> {
    let cfg = common.resolve()?;
    let spec = cfg.scenario_spec();
    let scenario = generate_scenario(&spec)?;
    let outcome = resource_allocation(&scenario, &cfg.solver, None)?;
    println!(
        "T = {:.6} s, U = {:.6}, objective = {:.6}, converged = {} after {} outer / {} FP iterations",
        outcome.metrics.t_total,
        outcome.metrics.u_total,
        outcome.metrics.objective,
        outcome.converged,
        outcome.iters_outer,
        outcome.iters_fp_total
    );
    if let Some(path) = out {
        write_json(
            &SolveReport {
                spec: &spec,
                config: &cfg.solver,
                outcome: &outcome,
            },
            Some(path),
        )?;
    }
    Ok(if outcome.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

pub fn cmd_sweep(common: &Common, axis: &str, values: &str, out: &Path) -> Result<u8> {
    let axis: SweepAxis = axis.parse()?;
    let values = parse_range(values)?;
    let cfg = common.resolve()?;
    let spec = cfg.scenario_spec();
    let started = now_utc();
    let run = sweep(&spec, axis, &values, &cfg.solver, &cfg.sweep_options())?;
    let manifest = Manifest::new(&spec, &cfg.solver, &run, started);
    let written = persist(&run, &manifest, out)?;
    println!("wrote {} and {}", written.csv.display(), written.manifest.display());
    for f in &run.failures {
        eprintln!("{} = {}, {:?} ({}, {}): {}", axis, f.axis_value, f.method, f.w1, f.w2, f.message);
    }
    if !run.failures.is_empty() {
        return Ok(EXIT_ERROR);
    }
    let all_converged = run.result.rows.iter().all(|r| r.converged);
    Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Solves the configured instance and compares it with the grid oracle and
/// the KKT conditions. Needs at most three users.
pub fn verify(cfg: &RunConfigFile) -> Result<Vec<Check>> {
    let spec = cfg.scenario_spec();
    if spec.n_users > 3 {
        return Err(Error::TooManyUsers(spec.n_users));
    }
    let scenario = generate_scenario(&spec)?;
    let out = resource_allocation(&scenario, &cfg.solver, None)?;
    let mut checks = vec![Check {
        name: "converged",
        passed: out.converged,
        detail: format!("{} outer iterations", out.iters_outer),
    }];
    let report = check_feasible(&out.alloc, &scenario);
    checks.push(Check {
        name: "feasible",
        passed: report.is_ok(),
        detail: if report.is_ok() { "all constraints hold".into() } else { report.to_string() },
    });
    let r = out.residuals;
    let worst = r.max_residual();
    checks.push(Check {
        name: "kkt",
        passed: worst <= VERIFY_KKT_TOL && r.dual_min >= 0.0,
        detail: format!("max scaled residual {worst:.3e}, smallest multiplier {:.3e}", r.dual_min),
    });
    let grid = grid_search(
        &scenario,
        &out.state.anchors,
        &ZPolicy::Optimal,
        &GridSpec::new(VERIFY_GRID_POINTS),
    )?;
    let gap = (out.surrogate_objective - grid.value) / grid.value.abs().max(f64::MIN_POSITIVE);
    checks.push(Check {
        name: "grid",
        passed: out.surrogate_objective <= grid.value + VERIFY_GRID_MARGIN * grid.value.abs(),
        detail: format!(
            "solver {:.9e}, grid best {:.9e} ({:.2e} relative, {:.2e} points)",
            out.surrogate_objective, grid.value, gap, grid.combinations
        ),
    });
    Ok(checks)
}

pub fn cmd_verify(common: &Common) -> Result<u8> {
    let checks = verify(&common.resolve()?)?;
    for c in &checks {
        println!("{} {:<9} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if checks.iter().all(|c| c.passed) { EXIT_OK } else { EXIT_ERROR })
}

pub fn cmd_gen_scenario(common: &Common, out: Option<&Path>) -> Result<u8> {
    let cfg = common.resolve()?;
    let scenario = generate_scenario(&cfg.scenario_spec())?;
    log::info!(
        "{} users, p_total {:.1} dBm, b_total {:e} Hz",
        scenario.n_users(),
        watts_to_dbm(scenario.p_total),
        scenario.b_total
    );
    write_json(&scenario, out)?;
    Ok(EXIT_OK)
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve { common, .. }
            | Command::Sweep { common, .. }
            | Command::Verify { common }
            | Command::GenScenario { common, .. } => common,
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    if let Some(t) = cli.command.common().threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match &cli.command {
        Command::Solve { common, out } => cmd_solve(common, out.as_deref()),
        Command::Sweep {
            common,
            axis,
            values,
            out,
        } => cmd_sweep(common, axis, values, out),
        Command::Verify { common } => cmd_verify(common),
        Command::GenScenario { common, out } => cmd_gen_scenario(common, out.as_deref()),
    }
}

/// Runs the parsed command and maps errors to exit code 1.
pub fn run(cli: &Cli) -> u8 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Entry point of the binary: logging from `SECOMM_LOG`, argument parsing
/// (usage errors exit 1), then [`run`].
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("SECOMM_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            return ExitCode::from(code);
        }
    };
    ExitCode::from(run(&cli))
}
