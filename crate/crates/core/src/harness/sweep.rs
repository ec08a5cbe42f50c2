use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, Scenario, Weights};
use crate::solver::{resource_allocation, MetricsReport, SolverConfig};

use super::baselines::{baseline_equal, baseline_random};
use super::scenario::{generate_scenario, ScenarioSpec};

/// Bits per megabyte on the size axis.
pub const BITS_PER_MBYTE: f64 = 8e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PTotalDbm,
    BTotalMhz,
    SMaxMbytes,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 3] = [SweepAxis::PTotalDbm, SweepAxis::BTotalMhz, SweepAxis::SMaxMbytes];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PTotalDbm => "p_total_dbm",
            SweepAxis::BTotalMhz => "b_total_mhz",
            SweepAxis::SMaxMbytes => "s_max_mbytes",
        }
    }

    /// Copy of `spec` with the swept quantity set to `value`.
    pub fn apply(self, spec: &ScenarioSpec, value: f64) -> ScenarioSpec {
        let mut out = spec.clone();
        match self {
            SweepAxis::PTotalDbm => out.p_total_dbm = value,
            SweepAxis::BTotalMhz => out.b_total_hz = value * 1e6,
            SweepAxis::SMaxMbytes => out.user.s_max_bits = value * BITS_PER_MBYTE,
        }
        out
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown axis {s:?}, expected one of p_total_dbm, b_total_mhz, s_max_mbytes"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Proposed,
    Random,
    Equal,
}

/// A method and the weights its objective is reported under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub kind: MethodKind,
    pub weights: Weights,
}

impl Method {
    pub fn proposed(w1: f64, w2: f64) -> Self {
        Self {
            kind: MethodKind::Proposed,
            weights: Weights::new(w1, w2),
        }
    }

    /// The proposed method at the three weight pairs, then both baselines
    /// at (0.5, 0.5).
    pub fn defaults() -> Vec<Method> {
        let half = Weights::new(0.5, 0.5);
        vec![
            Method::proposed(0.3, 0.7),
            Method::proposed(0.5, 0.5),
            Method::proposed(0.7, 0.3),
            Method {
                kind: MethodKind::Random,
                weights: half,
            },
            Method {
                kind: MethodKind::Equal,
                weights: half,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub methods: Vec<Method>,
    /// Seeds of the random baseline; its row is the run with the median
    /// objective.
    pub random_seeds: usize,
    /// Worker cap; `None` uses every core.
    pub threads: Option<usize>,
    /// Write measured times to the CSV. Off by default so that reruns give
    /// identical files; the manifest always has them.
    pub timing_in_csv: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            methods: Method::defaults(),
            random_seeds: 20,
            threads: None,
            timing_in_csv: false,
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub method: MethodKind,
    pub w1: f64,
    pub w2: f64,
    #[serde(rename = "T_total_s")]
    pub t_total_s: f64,
    #[serde(rename = "U_total")]
    pub u_total: f64,
    pub objective: f64,
    pub converged: bool,
    pub iters_outer: usize,
    pub iters_fp_total: usize,
    pub wall_ms: f64,
}

impl SweepRow {
    pub fn weights(&self) -> Weights {
        Weights::new(self.w1, self.w2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Ordered by axis value, then by method in the order requested.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Rows of one method at given weights, in axis order.
    pub fn series(&self, kind: MethodKind, weights: Weights) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.method == kind && r.weights() == weights)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub axis_value: f64,
    pub method: MethodKind,
    pub w1: f64,
    pub w2: f64,
    pub message: String,
}

/// A sweep with its run-time side data.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub result: SweepResult,
    /// Measured time of each row, in row order.
    pub wall_ms: Vec<f64>,
    pub failures: Vec<PointFailure>,
}

/// Seed of the `i`-th random-baseline draw for scenario seed `seed`.
pub fn random_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Metrics of the random baseline over `seeds` draws: the draw with the
/// lower-median objective under `weights`, ties broken by draw index.
pub fn random_median(
    scenario: &Scenario,
    seed: u64,
    seeds: usize,
    weights: Weights,
) -> Result<(Allocation, MetricsReport)> {
    if seeds == 0 {
        return Err(Error::Invalid("random baseline needs at least one seed".into()));
    }
    let mut runs = (0..seeds)
        .map(|i| {
            let a = baseline_random(scenario, random_seed(seed, i))?;
            let m = MetricsReport::evaluate(&a, scenario)?;
            Ok((m.combined(weights.w1, weights.w2), i, a, m))
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let (_, _, a, m) = runs.swap_remove((seeds - 1) / 2);
    Ok((a, m))
}

struct Point {
    row: SweepRow,
    wall_ms: f64,
    failure: Option<String>,
}

fn run_point(
    spec: &ScenarioSpec,
    axis: SweepAxis,
    value: f64,
    method: Method,
    config: &SolverConfig,
    options: &SweepOptions,
) -> Point {
    let start = Instant::now();
    let mut row = SweepRow {
        axis,
        axis_value: value,
        method: method.kind,
        w1: method.weights.w1,
        w2: method.weights.w2,
        t_total_s: f64::NAN,
        u_total: f64::NAN,
        objective: f64::NAN,
        converged: false,
        iters_outer: 0,
        iters_fp_total: 0,
        wall_ms: 0.0,
    };
    let outcome = (|| -> Result<()> {
        let scenario = generate_scenario(&axis.apply(spec, value))?.with_weights(method.weights);
        let metrics = match method.kind {
            MethodKind::Proposed => {
                let out = resource_allocation(&scenario, config, None)?;
                row.converged = out.converged;
                row.iters_outer = out.iters_outer;
                row.iters_fp_total = out.iters_fp_total;
                out.metrics
            }
            MethodKind::Random => {
                row.converged = true;
                random_median(&scenario, spec.seed, options.random_seeds, method.weights)?.1
            }
            MethodKind::Equal => {
                row.converged = true;
                MetricsReport::evaluate(&baseline_equal(&scenario)?, &scenario)?
            }
        };
        row.t_total_s = metrics.t_total;
        row.u_total = metrics.u_total;
        row.objective = metrics.combined(method.weights.w1, method.weights.w2);
        Ok(())
    })();
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    if options.timing_in_csv {
        row.wall_ms = wall_ms;
    }
    let failure = outcome.err().map(|e| {
        log::warn!("{axis} = {value}, {:?}: {e}", method.kind);
        row.converged = false;
        e.to_string()
    });
    Point { row, wall_ms, failure }
}

/// Runs every method at every axis value. The scenario is regenerated from
/// `spec` for each value, so only the swept quantity changes. Failed points
/// are recorded with NaN metrics rather than aborting the sweep.
pub fn sweep(
    spec: &ScenarioSpec,
    axis: SweepAxis,
    values: &[f64],
    config: &SolverConfig,
    options: &SweepOptions,
) -> Result<SweepRun> {
    if values.is_empty() {
        return Err(Error::Invalid("sweep needs at least one axis value".into()));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Invalid("axis values must be strictly ascending".into()));
    }
    if options.methods.is_empty() {
        return Err(Error::Invalid("sweep needs at least one method".into()));
    }
    spec.validate()?;
    config.validate()?;

    let jobs: Vec<(f64, Method)> = values
        .iter()
        .flat_map(|&v| options.methods.iter().map(move |&m| (v, m)))
        .collect();
    let run = || -> Vec<Point> {
        jobs.par_iter()
            .map(|&(v, m)| run_point(spec, axis, v, m, config, options))
            .collect()
    };
    let points = match options.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut rows = Vec::with_capacity(points.len());
    let mut wall_ms = Vec::with_capacity(points.len());
    let mut failures = Vec::new();
    for p in points {
        if let Some(message) = p.failure {
            failures.push(PointFailure {
                axis_value: p.row.axis_value,
                method: p.row.method,
                w1: p.row.w1,
                w2: p.row.w2,
                message,
            });
        }
        wall_ms.push(p.wall_ms);
        rows.push(p.row);
    }
    Ok(SweepRun {
        result: SweepResult {
            axis,
            values: values.to_vec(),
            rows,
        },
        wall_ms,
        failures,
    })
}

/// Parses `lo:hi:step` into the ascending list `lo, lo+step, …` up to `hi`
/// (inclusive within a small tolerance).
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Invalid(format!("expected lo:hi:step, got {text:?}"));
    let [lo, hi, step] = parts.as_slice() else {
        return Err(bad());
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let (lo, hi, step) = (parse(lo)?, parse(hi)?, parse(step)?);
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && hi >= lo) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if count > 10_000 {
        return Err(Error::Invalid(format!("{text:?} gives {count} points")));
    }
    // index-based so rounding does not accumulate
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}
