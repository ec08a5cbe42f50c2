use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::SolverConfig;

use super::scenario::ScenarioSpec;
use super::sweep::{PointFailure, SweepAxis, SweepResult, SweepRow, SweepRun};

pub const CSV_HEADER: &str =
    "axis,axis_value,method,w1,w2,T_total_s,U_total,objective,converged,iters_outer,iters_fp_total,wall_ms";

/// Version string written to manifests.
pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ScenarioSpec,
    pub config: SolverConfig,
    pub seed: u64,
    pub version: String,
    pub started_utc: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Measured time of each CSV row, in row order.
    pub wall_ms: Vec<f64>,
    pub failures: Vec<PointFailure>,
}

impl Manifest {
    pub fn new(spec: &ScenarioSpec, config: &SolverConfig, run: &SweepRun, started_utc: String) -> Self {
        Self {
            spec: spec.clone(),
            config: *config,
            seed: spec.seed,
            version: version(),
            started_utc,
            axis: run.result.axis,
            values: run.result.values.clone(),
            wall_ms: run.wall_ms.clone(),
            failures: run.failures.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Persisted {
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

/// Current UTC time in RFC 3339 form.
pub fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// CSV text of a sweep result.
pub fn to_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in &result.rows {
        w.serialize(row).map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    }
    let body = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    let body = String::from_utf8(body).map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(format!("{CSV_HEADER}\n{body}"))
}

/// Writes `sweep_<axis>.csv` and `sweep_<axis>.manifest.json` into `dir`.
pub fn persist(run: &SweepRun, manifest: &Manifest, dir: &Path) -> Result<Persisted> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = format!("sweep_{}", run.result.axis);
    let csv_path = dir.join(format!("{stem}.csv"));
    let manifest_path = dir.join(format!("{stem}.manifest.json"));
    fs::write(&csv_path, to_csv(&run.result)?).map_err(|e| Error::io(&csv_path, e))?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Invalid(format!("manifest: {e}")))?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(Persisted {
        csv: csv_path,
        manifest: manifest_path,
    })
}

/// Parses CSV text produced by [`to_csv`]. `path` only labels errors.
pub fn parse_csv(text: &str, path: &Path) -> Result<SweepResult> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let header = text.lines().next().unwrap_or("");
    if header.trim_end_matches('\r') != CSV_HEADER {
        return Err(parse_err(format!("header {header:?} does not match {CSV_HEADER:?}")));
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows = reader
        .deserialize::<SweepRow>()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| parse_err(format!("row {}: {e}", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    let axis = rows.first().map(|r| r.axis).ok_or_else(|| parse_err("no data rows".into()))?;
    if let Some(r) = rows.iter().find(|r| r.axis != axis) {
        return Err(parse_err(format!("mixed axes {axis} and {}", r.axis)));
    }
    let mut values: Vec<f64> = Vec::new();
    for r in &rows {
        if values.last() != Some(&r.axis_value) {
            values.push(r.axis_value);
        }
    }
    Ok(SweepResult { axis, values, rows })
}

pub fn read_csv(path: &Path) -> Result<SweepResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
