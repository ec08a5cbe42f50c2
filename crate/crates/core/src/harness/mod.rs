//! Scenario generation, baselines, parameter sweeps and result files.

mod baselines;
mod persist;
mod scenario;
mod sweep;

pub use baselines::{baseline_equal, baseline_random};
pub use persist::{
    now_utc, parse_csv, persist, read_csv, read_manifest, to_csv, version, Manifest, Persisted, CSV_HEADER,
};
pub use scenario::{generate_scenario, EavesdropperPolicy, ScenarioSpec, UserDefaults};
pub use sweep::{
    parse_range, random_median, random_seed, sweep, Method, MethodKind, PointFailure, SweepAxis, SweepOptions,
    SweepResult, SweepRow, SweepRun, BITS_PER_MBYTE,
};
