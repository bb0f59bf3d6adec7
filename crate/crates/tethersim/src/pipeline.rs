//! Flight-log ingestion, plane reduction, and time-series replay.
//!
//! A flight log is a CSV of timestamped base/drone positions with optional
//! wind, acceleration, and measured-tension columns (ENU meters, or geodetic
//! coordinates converted on ingest). Each sample is reduced to the vertical
//! plane through the two attachments and replayed through the analytical
//! solver, the numerical solver, or both, honoring warm-start chains and the
//! bend-radius fallback rule.

use std::io;
use std::path::Path;

use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

use crate::catenary::{solve_with_drag, CatenaryOptions, CatenarySolution};
use crate::lumped::{
    init_from_analytical, should_fallback, straight_line_init, warm_start, DragProvider,
    Environment, EquilibriumOptions, EquilibriumSolver, ForceProvider, InertiaProvider,
    LumpedModel, LumpedState,
};
use crate::model::{PlanarBoundary, SolveMethod, TetherSpec, Vec2};

/// 3D local East-North-Up vector [m].
pub type Vec3 = Vector3<f64>;

/// Equatorial Earth radius used by the small-area geodetic conversion [m].
pub const EARTH_RADIUS: f64 = 6_378_137.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("empty flight log")]
    EmptyLog,
    #[error("degenerate geometry at t={t}: base and drone positions coincide")]
    DegenerateGeometry { t: f64 },
}

/// One row of a flight log.
#[derive(Debug, Clone)]
pub struct FlightSample {
    /// Timestamp [s], strictly increasing across a log.
    pub t: f64,
    /// Ground-vehicle position, local ENU [m].
    pub base_pos: Vec3,
    /// Drone position, local ENU [m].
    pub drone_pos: Vec3,
    /// Airspeed estimate [m/s]; `None` falls back to finite-difference
    /// drone velocity during replay.
    pub airspeed: Option<Vec3>,
    /// Drone acceleration [m/s²]; derived from positions when absent and
    /// the inertia term is requested.
    pub drone_accel: Option<Vec3>,
    /// Load-cell reading at the drone attachment [N].
    pub measured_tension: Option<f64>,
}

/// Geodetic anchor for the local ENU frame.
#[derive(Debug, Clone, Copy)]
pub struct GeodeticOrigin {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

/// Equirectangular small-area approximation about `origin`, accurate to
/// well under 0.1% for spans below a couple of kilometers.
pub fn geodetic_to_local(
    latitude: f64,
    longitude: f64,
    altitude: f64,
    origin: &GeodeticOrigin,
) -> Vec3 {
    let east = (longitude - origin.longitude).to_radians()
        * EARTH_RADIUS
        * origin.latitude.to_radians().cos();
    let north = (latitude - origin.latitude).to_radians() * EARTH_RADIUS;
    Vec3::new(east, north, altitude - origin.altitude)
}

/// A flight sample reduced to the vertical solution plane.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedSample {
    pub boundary: PlanarBoundary,
    pub environment: Environment,
    /// Horizontal airspeed component perpendicular to the plane [m/s];
    /// reported, not modeled.
    pub out_of_plane_airspeed: f64,
    /// Vertical airspeed component [m/s]; the drag law assumes horizontal
    /// flow, so this is diagnostic only.
    pub vertical_airspeed: f64,
}

/// Reduces a sample to the vertical plane through base and drone.
///
/// The plane's x axis points horizontally from the base toward the drone
/// (base at x = 0), y is altitude. For vertically stacked positions the
/// horizontal axis is taken from the wind azimuth, or East if there is no
/// wind either.
pub fn project_to_plane(sample: &FlightSample) -> Result<ProjectedSample, PipelineError> {
    let delta = sample.drone_pos - sample.base_pos;
    if delta.norm() == 0.0 {
        return Err(PipelineError::DegenerateGeometry { t: sample.t });
    }
    let wind = sample.airspeed.unwrap_or_else(Vec3::zeros);
    let horizontal = Vec2::new(delta.x, delta.y);
    let axis = if horizontal.norm() > 1e-9 {
        horizontal / horizontal.norm()
    } else {
        let wind_h = Vec2::new(wind.x, wind.y);
        if wind_h.norm() > 1e-9 {
            wind_h / wind_h.norm()
        } else {
            Vec2::new(1.0, 0.0)
        }
    };

    let boundary = PlanarBoundary::new(
        Vec2::new(0.0, sample.base_pos.z),
        Vec2::new(horizontal.norm(), sample.drone_pos.z),
        wind.x * axis.x + wind.y * axis.y,
    );
    let accel = sample.drone_accel.unwrap_or_else(Vec3::zeros);
    let environment = Environment {
        airspeed: boundary.airspeed,
        drone_acceleration: Vec2::new(accel.x * axis.x + accel.y * axis.y, accel.z),
    };
    Ok(ProjectedSample {
        boundary,
        environment,
        out_of_plane_airspeed: -wind.x * axis.y + wind.y * axis.x,
        vertical_airspeed: wind.z,
    })
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

const ENU_COLUMNS: [&str; 7] = [
    "t", "base_x", "base_y", "base_z", "drone_x", "drone_y", "drone_z",
];
const GEODETIC_COLUMNS: [&str; 7] = [
    "t",
    "base_lat",
    "base_lon",
    "base_alt",
    "drone_lat",
    "drone_lon",
    "drone_alt",
];

struct ColumnMap {
    geodetic: bool,
    indices: std::collections::HashMap<String, usize>,
}

impl ColumnMap {
    fn get(&self, record: &csv::StringRecord, name: &str) -> Option<String> {
        self.indices
            .get(name)
            .and_then(|&i| record.get(i))
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
    }

    fn required(
        &self,
        record: &csv::StringRecord,
        name: &str,
        line: u64,
    ) -> Result<f64, PipelineError> {
        let raw = self.get(record, name).ok_or_else(|| PipelineError::Schema {
            line,
            message: format!("missing value for required column '{name}'"),
        })?;
        raw.parse().map_err(|_| PipelineError::Schema {
            line,
            message: format!("column '{name}': cannot parse '{raw}' as a number"),
        })
    }

    fn optional(
        &self,
        record: &csv::StringRecord,
        name: &str,
        line: u64,
    ) -> Result<Option<f64>, PipelineError> {
        match self.get(record, name) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| PipelineError::Schema {
                line,
                message: format!("column '{name}': cannot parse '{raw}' as a number"),
            }),
        }
    }

    fn optional_vec3(
        &self,
        record: &csv::StringRecord,
        names: [&str; 3],
        line: u64,
    ) -> Result<Option<Vec3>, PipelineError> {
        let x = self.optional(record, names[0], line)?;
        let y = self.optional(record, names[1], line)?;
        let z = self.optional(record, names[2], line)?;
        match (x, y, z) {
            (None, None, None) => Ok(None),
            _ => Ok(Some(Vec3::new(
                x.unwrap_or(0.0),
                y.unwrap_or(0.0),
                z.unwrap_or(0.0),
            ))),
        }
    }
}

fn detect_columns(headers: &csv::StringRecord) -> Result<ColumnMap, PipelineError> {
    let mut indices = std::collections::HashMap::new();
    for (i, name) in headers.iter().enumerate() {
        indices.insert(name.trim().to_string(), i);
    }
    let has_all = |cols: &[&str]| cols.iter().all(|c| indices.contains_key(*c));
    if has_all(&ENU_COLUMNS) {
        Ok(ColumnMap {
            geodetic: false,
            indices,
        })
    } else if has_all(&GEODETIC_COLUMNS) {
        Ok(ColumnMap {
            geodetic: true,
            indices,
        })
    } else {
        Err(PipelineError::Schema {
            line: 1,
            message: format!(
                "header must contain {} or {}",
                ENU_COLUMNS.join(","),
                GEODETIC_COLUMNS.join(",")
            ),
        })
    }
}

/// Reads a flight log CSV (ENU or geodetic header, auto-detected).
pub fn read_flight_log(path: &Path) -> Result<Vec<FlightSample>, PipelineError> {
    read_flight_log_from(std::fs::File::open(path)?)
}

/// Reads a flight log CSV from any reader.
pub fn read_flight_log_from<R: io::Read>(reader: R) -> Result<Vec<FlightSample>, PipelineError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let columns = detect_columns(csv_reader.headers()?)?;

    let mut samples: Vec<FlightSample> = Vec::new();
    let mut origin: Option<GeodeticOrigin> = None;
    for result in csv_reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let t = columns.required(&record, "t", line)?;

        let (base_pos, drone_pos) = if columns.geodetic {
            let base_lat = columns.required(&record, "base_lat", line)?;
            let base_lon = columns.required(&record, "base_lon", line)?;
            let base_alt = columns.required(&record, "base_alt", line)?;
            let origin = *origin.get_or_insert(GeodeticOrigin {
                latitude: base_lat,
                longitude: base_lon,
                altitude: base_alt,
            });
            let base = geodetic_to_local(base_lat, base_lon, base_alt, &origin);
            let drone = geodetic_to_local(
                columns.required(&record, "drone_lat", line)?,
                columns.required(&record, "drone_lon", line)?,
                columns.required(&record, "drone_alt", line)?,
                &origin,
            );
            (base, drone)
        } else {
            (
                Vec3::new(
                    columns.required(&record, "base_x", line)?,
                    columns.required(&record, "base_y", line)?,
                    columns.required(&record, "base_z", line)?,
                ),
                Vec3::new(
                    columns.required(&record, "drone_x", line)?,
                    columns.required(&record, "drone_y", line)?,
                    columns.required(&record, "drone_z", line)?,
                ),
            )
        };

        if let Some(prev) = samples.last() {
            if t <= prev.t {
                return Err(PipelineError::Schema {
                    line,
                    message: format!(
                        "timestamps must be strictly increasing ({} after {})",
                        t, prev.t
                    ),
                });
            }
        }
        samples.push(FlightSample {
            t,
            base_pos,
            drone_pos,
            airspeed: columns.optional_vec3(&record, ["wind_x", "wind_y", "wind_z"], line)?,
            drone_accel: columns.optional_vec3(&record, ["acc_x", "acc_y", "acc_z"], line)?,
            measured_tension: columns.optional(&record, "tension_measured", line)?,
        });
    }
    if samples.is_empty() {
        return Err(PipelineError::EmptyLog);
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Derived kinematics
// ---------------------------------------------------------------------------

/// Drone velocities by central differences (one-sided at the ends).
pub fn drone_velocities(samples: &[FlightSample]) -> Vec<Vec3> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, (n - 1).min(1)),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            let dt = samples[b].t - samples[a].t;
            if dt > 0.0 {
                (samples[b].drone_pos - samples[a].drone_pos) / dt
            } else {
                Vec3::zeros()
            }
        })
        .collect()
}

/// Drone accelerations by second differences of position, smoothed with a
/// centered 5-sample moving average.
pub fn drone_accelerations(samples: &[FlightSample]) -> Vec<Vec3> {
    let n = samples.len();
    let mut raw = vec![Vec3::zeros(); n];
    for i in 1..n.saturating_sub(1) {
        let dt0 = samples[i].t - samples[i - 1].t;
        let dt1 = samples[i + 1].t - samples[i].t;
        if dt0 > 0.0 && dt1 > 0.0 {
            let v0 = (samples[i].drone_pos - samples[i - 1].drone_pos) / dt0;
            let v1 = (samples[i + 1].drone_pos - samples[i].drone_pos) / dt1;
            raw[i] = 2.0 * (v1 - v0) / (dt0 + dt1);
        }
    }
    if n > 2 {
        raw[0] = raw[1];
        raw[n - 1] = raw[n - 2];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            let mut sum = Vec3::zeros();
            for r in &raw[lo..=hi] {
                sum += *r;
            }
            sum / (hi - lo + 1) as f64
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// Which solver(s) a replay runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMethod {
    Analytical,
    Numerical,
    Both,
}

/// Initialization policy for the numerical solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitPolicy {
    /// Previous solution when the boundary moved less than 5% of L,
    /// analytical initialization otherwise.
    WarmStart,
    /// Analytical initialization on every sample.
    AnalyticalInit,
    /// Straight line on every sample (benchmark baseline).
    StraightLine,
}

impl InitPolicy {
    pub fn label(&self) -> &'static str {
        match self {
            InitPolicy::WarmStart => "warm-start",
            InitPolicy::AnalyticalInit => "analytical-init",
            InitPolicy::StraightLine => "straight-line",
        }
    }
}

/// Replay controls.
#[derive(Debug, Clone, Copy)]
pub struct ReplayConfig {
    pub method: ReplayMethod,
    pub segments: usize,
    pub init: InitPolicy,
    pub inertia: bool,
    pub tol: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            method: ReplayMethod::Both,
            segments: 60,
            init: InitPolicy::WarmStart,
            inertia: false,
            tol: 1e-8,
        }
    }
}

/// One solved (or failed) sample in a replay series.
#[derive(Debug, Clone)]
pub struct TensionRecord {
    pub t: f64,
    /// "analytical", "numerical", "analytical-fallback", or "failed".
    pub method: String,
    /// Guess label or init strategy of the solve.
    pub strategy: String,
    pub start_tension: f64,
    pub end_tension: f64,
    pub solve_time: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub measured_tension: Option<f64>,
    /// Failure message for failed samples.
    pub error: Option<String>,
}

impl TensionRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Per-sample records of one method over a log.
#[derive(Debug, Clone)]
pub struct TensionSeries {
    /// Requested method ("analytical" or "numerical").
    pub method: &'static str,
    pub records: Vec<TensionRecord>,
}

/// Mean / median / 95th percentile of a set of solve times.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimingStats {
    pub mean_s: f64,
    pub median_s: f64,
    pub p95_s: f64,
}

impl TimingStats {
    pub fn from_times(times: &[f64]) -> Option<Self> {
        if times.is_empty() {
            return None;
        }
        let mut sorted = times.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(Self {
            mean_s: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median_s: percentile(&sorted, 0.5),
            p95_s: percentile(&sorted, 0.95),
        })
    }
}

/// Percentile of an ascending-sorted slice (nearest-rank).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Timing breakdown for one init strategy within a series.
#[derive(Debug, Clone, Serialize)]
pub struct StrategyTiming {
    pub strategy: String,
    pub n_samples: usize,
    #[serde(flatten)]
    pub timing: TimingStats,
}

/// Per-method replay summary.
#[derive(Debug, Clone, Serialize)]
pub struct ReplaySummary {
    pub method: String,
    pub n_samples: usize,
    pub n_failed: usize,
    pub mean_solve_s: f64,
    pub median_solve_s: f64,
    pub p95_solve_s: f64,
    /// Mean |T_this − T_other| at the drone attachment, when both methods
    /// ran [N].
    #[serde(rename = "mean_abs_diff_N")]
    pub mean_abs_diff_n: Option<f64>,
    #[serde(rename = "max_abs_diff_N")]
    pub max_abs_diff_n: Option<f64>,
    #[serde(rename = "mean_abs_diff_start_N")]
    pub mean_abs_diff_start_n: Option<f64>,
    #[serde(rename = "max_abs_diff_start_N")]
    pub max_abs_diff_start_n: Option<f64>,
    /// Mean |T_end − measured| over samples carrying a load-cell reading [N].
    #[serde(rename = "mean_abs_diff_measured_N")]
    pub mean_abs_diff_measured_n: Option<f64>,
    pub strategies: Vec<StrategyTiming>,
}

/// Full replay result.
#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub analytical: Option<TensionSeries>,
    pub numerical: Option<TensionSeries>,
    pub summaries: Vec<ReplaySummary>,
}

/// Lazily solved analytical solutions, one per sample.
struct AnalyticalCache {
    options: CatenaryOptions,
    spec: TetherSpec,
    slots: Vec<Option<Result<CatenarySolution, String>>>,
}

impl AnalyticalCache {
    fn new(spec: TetherSpec, options: CatenaryOptions, n: usize) -> Self {
        Self {
            options,
            spec,
            slots: vec![None; n],
        }
    }

    fn get(&mut self, index: usize, bc: &PlanarBoundary) -> Result<CatenarySolution, String> {
        if self.slots[index].is_none() {
            let solved = solve_with_drag(bc, &self.spec, &self.options).map_err(|e| e.to_string());
            self.slots[index] = Some(solved);
        }
        self.slots[index].as_ref().unwrap().clone()
    }
}

fn analytical_record(
    t: f64,
    measured: Option<f64>,
    solution: &CatenarySolution,
    method: SolveMethod,
) -> TensionRecord {
    let s = &solution.solution;
    TensionRecord {
        t,
        method: method.label().to_string(),
        strategy: s.diagnostics.strategy.clone(),
        start_tension: s.start_tension(),
        end_tension: s.end_tension(),
        solve_time: s.diagnostics.solve_time,
        residual_norm: s.diagnostics.residual_norm,
        iterations: s.diagnostics.iterations,
        measured_tension: measured,
        error: None,
    }
}

fn failed_record(t: f64, measured: Option<f64>, strategy: &str, message: String) -> TensionRecord {
    TensionRecord {
        t,
        method: "failed".to_string(),
        strategy: strategy.to_string(),
        start_tension: f64::NAN,
        end_tension: f64::NAN,
        solve_time: 0.0,
        residual_norm: f64::NAN,
        iterations: 0,
        measured_tension: measured,
        error: Some(message),
    }
}

/// Replays a flight log through the configured method(s).
///
/// Per-sample solver failures are recorded in-series and never abort the
/// replay. Warm-start chains run in sample order; a failed warm-started
/// sample retries with analytical initialization before being reported
/// failed.
pub fn replay(
    samples: &[FlightSample],
    spec: &TetherSpec,
    config: &ReplayConfig,
) -> Result<ReplayOutput, PipelineError> {
    if samples.is_empty() {
        return Err(PipelineError::EmptyLog);
    }

    // Fill in airspeed (finite-difference drone velocity) and, when the
    // inertia term is on, accelerations derived from positions.
    let velocities = drone_velocities(samples);
    let accelerations = if config.inertia {
        Some(drone_accelerations(samples))
    } else {
        None
    };
    let mut prepared: Vec<FlightSample> = samples.to_vec();
    for (i, sample) in prepared.iter_mut().enumerate() {
        if sample.airspeed.is_none() {
            sample.airspeed = Some(velocities[i]);
        }
        if sample.drone_accel.is_none() {
            if let Some(acc) = &accelerations {
                sample.drone_accel = Some(acc[i]);
            }
        }
        if !config.inertia {
            sample.drone_accel = None;
        }
    }

    let projected: Vec<Result<ProjectedSample, PipelineError>> =
        prepared.iter().map(project_to_plane).collect();

    let catenary_options = CatenaryOptions {
        tol: config.tol,
        ..CatenaryOptions::default()
    };
    let mut cache = AnalyticalCache::new(*spec, catenary_options, prepared.len());

    let analytical_series = matches!(config.method, ReplayMethod::Analytical | ReplayMethod::Both)
        .then(|| {
            let records = prepared
                .iter()
                .enumerate()
                .map(|(i, sample)| match &projected[i] {
                    Ok(p) => match cache.get(i, &p.boundary) {
                        Ok(solution) => analytical_record(
                            sample.t,
                            sample.measured_tension,
                            &solution,
                            SolveMethod::Analytical,
                        ),
                        Err(message) => failed_record(
                            sample.t,
                            sample.measured_tension,
                            "analytical",
                            message,
                        ),
                    },
                    Err(e) => failed_record(
                        sample.t,
                        sample.measured_tension,
                        "analytical",
                        e.to_string(),
                    ),
                })
                .collect();
            TensionSeries {
                method: "analytical",
                records,
            }
        });

    let numerical_series = matches!(config.method, ReplayMethod::Numerical | ReplayMethod::Both)
        .then(|| replay_numerical(&prepared, &projected, spec, config, &mut cache))
        .transpose()?;

    let mut summaries = Vec::new();
    if let Some(series) = &analytical_series {
        summaries.push(summarize(series, numerical_series.as_ref()));
    }
    if let Some(series) = &numerical_series {
        summaries.push(summarize(series, analytical_series.as_ref()));
    }

    Ok(ReplayOutput {
        analytical: analytical_series,
        numerical: numerical_series,
        summaries,
    })
}

fn replay_numerical(
    samples: &[FlightSample],
    projected: &[Result<ProjectedSample, PipelineError>],
    spec: &TetherSpec,
    config: &ReplayConfig,
    cache: &mut AnalyticalCache,
) -> Result<TensionSeries, PipelineError> {
    let model = LumpedModel::new(*spec, config.segments).map_err(|e| PipelineError::Schema {
        line: 0,
        message: e.to_string(),
    })?;
    let mut providers: Vec<Box<dyn ForceProvider>> = vec![Box::new(DragProvider)];
    if config.inertia {
        providers.push(Box::new(InertiaProvider));
    }
    let solver =
        EquilibriumSolver::with_providers(model, providers).with_options(EquilibriumOptions {
            tol: config.tol,
            ..EquilibriumOptions::default()
        });

    let mut previous: Option<(LumpedState, PlanarBoundary)> = None;
    let mut records = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let p = match &projected[i] {
            Ok(p) => p,
            Err(e) => {
                records.push(failed_record(
                    sample.t,
                    sample.measured_tension,
                    config.init.label(),
                    e.to_string(),
                ));
                previous = None;
                continue;
            }
        };
        let bc = p.boundary;
        let env = p.environment;

        // Bend-radius rule: the discretization cannot represent the fold.
        if should_fallback(&bc, spec, &env, config.segments) {
            match cache.get(i, &bc) {
                Ok(solution) => {
                    records.push(analytical_record(
                        sample.t,
                        sample.measured_tension,
                        &solution,
                        SolveMethod::AnalyticalFallback,
                    ));
                }
                Err(message) => {
                    records.push(failed_record(
                        sample.t,
                        sample.measured_tension,
                        "analytical-fallback",
                        message,
                    ));
                }
            }
            previous = None;
            continue;
        }

        let warm_candidate = previous.as_ref().and_then(|(state, last_bc)| {
            let moved = (bc.start - last_bc.start)
                .norm()
                .max((bc.end - last_bc.end).norm());
            (config.init == InitPolicy::WarmStart && moved < 0.05 * spec.length)
                .then(|| warm_start(state, &bc, solver.model()).ok())
                .flatten()
        });

        let attempts: Vec<(String, LumpedState)> = match (&config.init, warm_candidate) {
            (InitPolicy::StraightLine, _) => vec![(
                "straight-line".to_string(),
                straight_line_init(&bc, solver.model()),
            )],
            (_, Some(warm)) => {
                let mut list = vec![("warm-start".to_string(), warm)];
                if let Ok(solution) = cache.get(i, &bc) {
                    list.push((
                        "analytical-retry".to_string(),
                        init_from_analytical(&solution, solver.model()),
                    ));
                }
                list
            }
            (_, None) => match cache.get(i, &bc) {
                Ok(solution) => vec![(
                    "analytical-init".to_string(),
                    init_from_analytical(&solution, solver.model()),
                )],
                // analytical failed: last-resort straight line
                Err(_) => vec![(
                    "straight-line".to_string(),
                    straight_line_init(&bc, solver.model()),
                )],
            },
        };

        let mut solved = None;
        let mut last_error = String::new();
        for (strategy, init) in &attempts {
            match solver.solve(&bc, &env, init, strategy) {
                Ok(s) => {
                    solved = Some(s);
                    break;
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        match solved {
            Some(s) => {
                let sol = &s.solution;
                records.push(TensionRecord {
                    t: sample.t,
                    method: sol.method.label().to_string(),
                    strategy: sol.diagnostics.strategy.clone(),
                    start_tension: sol.start_tension(),
                    end_tension: sol.end_tension(),
                    solve_time: sol.diagnostics.solve_time,
                    residual_norm: sol.diagnostics.residual_norm,
                    iterations: sol.diagnostics.iterations,
                    measured_tension: sample.measured_tension,
                    error: None,
                });
                previous = Some((s.state, bc));
            }
            None => {
                records.push(failed_record(
                    sample.t,
                    sample.measured_tension,
                    config.init.label(),
                    last_error,
                ));
                previous = None;
            }
        }
    }
    Ok(TensionSeries {
        method: "numerical",
        records,
    })
}

fn summarize(series: &TensionSeries, other: Option<&TensionSeries>) -> ReplaySummary {
    let ok: Vec<&TensionRecord> = series.records.iter().filter(|r| !r.failed()).collect();
    let times: Vec<f64> = ok.iter().map(|r| r.solve_time).collect();
    let timing = TimingStats::from_times(&times).unwrap_or(TimingStats {
        mean_s: f64::NAN,
        median_s: f64::NAN,
        p95_s: f64::NAN,
    });

    let mut strategies: Vec<StrategyTiming> = Vec::new();
    for record in &ok {
        if !strategies.iter().any(|s| s.strategy == record.strategy) {
            let times: Vec<f64> = ok
                .iter()
                .filter(|r| r.strategy == record.strategy)
                .map(|r| r.solve_time)
                .collect();
            strategies.push(StrategyTiming {
                strategy: record.strategy.clone(),
                n_samples: times.len(),
                timing: TimingStats::from_times(&times).unwrap(),
            });
        }
    }

    let diffs = other.map(|other| {
        series
            .records
            .iter()
            .zip(other.records.iter())
            .filter(|(a, b)| !a.failed() && !b.failed())
            .map(|(a, b)| {
                (
                    (a.end_tension - b.end_tension).abs(),
                    (a.start_tension - b.start_tension).abs(),
                )
            })
            .collect::<Vec<_>>()
    });
    let (mean_end, max_end, mean_start, max_start) = match &diffs {
        Some(d) if !d.is_empty() => {
            let n = d.len() as f64;
            (
                Some(d.iter().map(|x| x.0).sum::<f64>() / n),
                d.iter()
                    .map(|x| x.0)
                    .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))),
                Some(d.iter().map(|x| x.1).sum::<f64>() / n),
                d.iter()
                    .map(|x| x.1)
                    .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))),
            )
        }
        _ => (None, None, None, None),
    };

    let measured: Vec<f64> = ok
        .iter()
        .filter_map(|r| r.measured_tension.map(|m| (r.end_tension - m).abs()))
        .collect();
    let mean_measured =
        (!measured.is_empty()).then(|| measured.iter().sum::<f64>() / measured.len() as f64);

    ReplaySummary {
        method: series.method.to_string(),
        n_samples: series.records.len(),
        n_failed: series.records.len() - ok.len(),
        mean_solve_s: timing.mean_s,
        median_solve_s: timing.median_s,
        p95_solve_s: timing.p95_s,
        mean_abs_diff_n: mean_end,
        max_abs_diff_n: max_end,
        mean_abs_diff_start_n: mean_start,
        max_abs_diff_start_n: max_start,
        mean_abs_diff_measured_n: mean_measured,
        strategies,
    }
}

/// Writes series records as CSV with deterministic formatting. NaN fields
/// and absent measurements are left empty.
pub fn write_series_csv<W: io::Write>(mut out: W, series_list: &[&TensionSeries]) -> io::Result<()> {
    writeln!(
        out,
        "t,method,strategy,start_tension,end_tension,solve_time,residual_norm,iterations,measured_tension,error"
    )?;
    let fmt = |x: f64| {
        if x.is_finite() {
            format!("{x}")
        } else {
            String::new()
        }
    };
    for series in series_list {
        for r in &series.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                fmt(r.t),
                r.method,
                r.strategy,
                fmt(r.start_tension),
                fmt(r.end_tension),
                fmt(r.solve_time),
                fmt(r.residual_norm),
                r.iterations,
                r.measured_tension.map(fmt).unwrap_or_default(),
                r.error.as_deref().unwrap_or_default().replace(',', ";"),
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn paper_spec() -> TetherSpec {
        TetherSpec::from_total_mass(32.0, 0.450, 0.0026, 1.2).unwrap()
    }

    #[test]
    fn geodetic_conversion_oracle() {
        let origin = GeodeticOrigin {
            latitude: 0.0,
            longitude: 0.0,
            altitude: 100.0,
        };
        // origin maps to the local origin
        assert_eq!(
            geodetic_to_local(0.0, 0.0, 100.0, &origin),
            Vec3::new(0.0, 0.0, 0.0)
        );
        // pure altitude change
        assert_eq!(
            geodetic_to_local(0.0, 0.0, 112.5, &origin),
            Vec3::new(0.0, 0.0, 12.5)
        );
        // 1e-4 degrees of latitude at the equator: R·Δφ
        let north = geodetic_to_local(1e-4, 0.0, 100.0, &origin);
        assert_relative_eq!(north.y, 11.131949079327358, epsilon = 1e-9);
        assert_abs_diff_eq!(north.x, 0.0, epsilon = 1e-12);
    }

    fn sample_at(t: f64, base: Vec3, drone: Vec3, wind: Option<Vec3>) -> FlightSample {
        FlightSample {
            t,
            base_pos: base,
            drone_pos: drone,
            airspeed: wind,
            drone_accel: None,
            measured_tension: None,
        }
    }

    #[test]
    fn projection_aligned_and_perpendicular_wind() {
        let base = Vec3::new(0.0, 0.0, 1.0);
        let drone = Vec3::new(6.0, 8.0, 25.0);

        // wind along the endpoint azimuth: V is its full magnitude
        let aligned = sample_at(0.0, base, drone, Some(Vec3::new(3.0, 4.0, 0.0)));
        let p = project_to_plane(&aligned).unwrap();
        assert_relative_eq!(p.boundary.airspeed, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.out_of_plane_airspeed, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.boundary.start.y, 1.0);
        assert_relative_eq!(p.boundary.end.x, 10.0, epsilon = 1e-12);
        assert_relative_eq!(p.boundary.end.y, 25.0);

        // perpendicular wind: V = 0, magnitude reported out of plane
        let cross = sample_at(0.0, base, drone, Some(Vec3::new(-4.0, 3.0, 1.5)));
        let p = project_to_plane(&cross).unwrap();
        assert_abs_diff_eq!(p.boundary.airspeed, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.out_of_plane_airspeed, 5.0, epsilon = 1e-12);
        assert_relative_eq!(p.vertical_airspeed, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn projection_degenerate_cases() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let coincident = sample_at(4.2, p, p, None);
        assert!(matches!(
            project_to_plane(&coincident),
            Err(PipelineError::DegenerateGeometry { .. })
        ));

        // vertically stacked: plane from wind azimuth
        let stacked = sample_at(
            0.0,
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 20.0),
            Some(Vec3::new(0.0, 2.0, 0.0)),
        );
        let proj = project_to_plane(&stacked).unwrap();
        assert_relative_eq!(proj.boundary.airspeed, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(proj.boundary.end.x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let csv = "t,base_x,base_y,base_z,drone_x,drone_y,drone_z,wind_x,wind_y,wind_z,acc_x,acc_y,acc_z,tension_measured\n\
                   0.0,0,0,0,5,0,28,1.5,0,0,,,,2.25\n\
                   0.1,0,0,0,5.1,0,28,,,,,,,\n";
        let samples = read_flight_log_from(csv.as_bytes()).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].airspeed, Some(Vec3::new(1.5, 0.0, 0.0)));
        assert_eq!(samples[0].measured_tension, Some(2.25));
        assert!(samples[1].airspeed.is_none());
        assert!(samples[1].measured_tension.is_none());

        // non-increasing timestamps carry the line number
        let bad = "t,base_x,base_y,base_z,drone_x,drone_y,drone_z\n\
                   0.0,0,0,0,5,0,28\n\
                   0.0,0,0,0,5,0,28\n";
        match read_flight_log_from(bad.as_bytes()) {
            Err(PipelineError::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected schema error, got {other:?}"),
        }

        // unparseable number carries the line number
        let junk = "t,base_x,base_y,base_z,drone_x,drone_y,drone_z\n\
                    0.0,0,0,zero,5,0,28\n";
        match read_flight_log_from(junk.as_bytes()) {
            Err(PipelineError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn geodetic_header_autodetected() {
        let csv = "t,base_lat,base_lon,base_alt,drone_lat,drone_lon,drone_alt\n\
                   0.0,47.0,8.0,400.0,47.0,8.0,430.0\n\
                   0.1,47.0,8.0,400.0,47.0001,8.0,430.0\n";
        let samples = read_flight_log_from(csv.as_bytes()).unwrap();
        assert_eq!(samples[0].base_pos, Vec3::zeros());
        assert_relative_eq!(samples[0].drone_pos.z, 30.0, epsilon = 1e-12);
        assert_relative_eq!(samples[1].drone_pos.y, 11.131949079327358, epsilon = 1e-9);
    }

    /// Synthetic log hovering around the validation-flight geometry, smooth
    /// enough for warm starts.
    fn synthetic_log(n: usize, with_wind: bool) -> Vec<FlightSample> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.1;
                let offset = 6.0 + 2.0 * (0.2 * t).sin();
                let wind = with_wind.then(|| Vec3::new(3.0 + 2.0 * (0.15 * t).cos(), 0.0, 0.0));
                sample_at(
                    t,
                    Vec3::new(0.0, 0.0, 0.5),
                    Vec3::new(offset, 0.0, 28.0),
                    wind,
                )
            })
            .collect()
    }

    #[test]
    fn replay_both_methods_agree() {
        let spec = paper_spec();
        let log = synthetic_log(40, true);
        let out = replay(&log, &spec, &ReplayConfig::default()).unwrap();
        let numerical = out.numerical.as_ref().unwrap();
        assert_eq!(numerical.records.len(), 40);
        assert!(numerical.records.iter().all(|r| !r.failed()));
        let summary = &out.summaries[1];
        assert_eq!(summary.method, "numerical");
        let mean_diff = summary.mean_abs_diff_n.unwrap();
        let mean_force: f64 =
            numerical.records.iter().map(|r| r.end_tension).sum::<f64>() / 40.0;
        assert!(
            mean_diff < 0.01 * mean_force,
            "mean diff {mean_diff} vs mean force {mean_force}"
        );
    }

    #[test]
    fn replay_is_deterministic_excluding_timing() {
        let spec = paper_spec();
        let log = synthetic_log(15, true);
        let a = replay(&log, &spec, &ReplayConfig::default()).unwrap();
        let b = replay(&log, &spec, &ReplayConfig::default()).unwrap();
        for (sa, sb) in [
            (
                a.analytical.as_ref().unwrap(),
                b.analytical.as_ref().unwrap(),
            ),
            (a.numerical.as_ref().unwrap(), b.numerical.as_ref().unwrap()),
        ] {
            for (ra, rb) in sa.records.iter().zip(sb.records.iter()) {
                assert_eq!(ra.start_tension.to_bits(), rb.start_tension.to_bits());
                assert_eq!(ra.end_tension.to_bits(), rb.end_tension.to_bits());
                assert_eq!(ra.method, rb.method);
                assert_eq!(ra.iterations, rb.iterations);
            }
        }
    }

    #[test]
    fn replay_inertia_off_matches_zero_acceleration() {
        let spec = paper_spec();
        // constant-velocity trace: derived acceleration is zero
        let log: Vec<FlightSample> = (0..12)
            .map(|i| {
                let t = i as f64 * 0.1;
                sample_at(
                    t,
                    Vec3::new(0.0, 0.0, 0.0),
                    Vec3::new(8.0 + 0.2 * t, 0.0, 27.0),
                    Some(Vec3::new(2.0, 0.0, 0.0)),
                )
            })
            .collect();
        let base = replay(
            &log,
            &spec,
            &ReplayConfig {
                inertia: false,
                ..ReplayConfig::default()
            },
        )
        .unwrap();
        let inertia = replay(
            &log,
            &spec,
            &ReplayConfig {
                inertia: true,
                ..ReplayConfig::default()
            },
        )
        .unwrap();
        let (a, b) = (
            base.numerical.as_ref().unwrap(),
            inertia.numerical.as_ref().unwrap(),
        );
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_abs_diff_eq!(ra.end_tension, rb.end_tension, epsilon = 1e-9);
        }
    }

    #[test]
    fn fallback_samples_marked() {
        let spec = paper_spec();
        // hovers almost straight above the base: rotated span < 2ℓ
        let log: Vec<FlightSample> = (0..5)
            .map(|i| {
                sample_at(
                    i as f64 * 0.1,
                    Vec3::new(0.0, 0.0, 0.0),
                    Vec3::new(0.3, 0.0, 30.0),
                    Some(Vec3::zeros()),
                )
            })
            .collect();
        let out = replay(
            &log,
            &spec,
            &ReplayConfig {
                method: ReplayMethod::Numerical,
                ..ReplayConfig::default()
            },
        )
        .unwrap();
        let series = out.numerical.as_ref().unwrap();
        for r in &series.records {
            assert_eq!(r.method, "analytical-fallback");
            assert!(r.end_tension > 0.0);
        }
    }

    #[test]
    fn synthesized_catenary_log_recovers_generating_tension() {
        let spec = paper_spec();
        // boundaries solved analytically ahead of time; their end tension
        // doubles as the "measured" value
        let boundaries: Vec<(f64, PlanarBoundary)> = (0..8)
            .map(|i| {
                let t = i as f64 * 0.1;
                let dx = 7.0 + 0.5 * i as f64;
                (
                    t,
                    PlanarBoundary::new(Vec2::new(0.0, 0.5), Vec2::new(dx, 28.0), 0.0),
                )
            })
            .collect();
        let options = CatenaryOptions::default();
        let log: Vec<FlightSample> = boundaries
            .iter()
            .map(|(t, bc)| {
                let truth = solve_with_drag(bc, &spec, &options).unwrap();
                FlightSample {
                    t: *t,
                    base_pos: Vec3::new(0.0, 0.0, bc.start.y),
                    drone_pos: Vec3::new(bc.end.x, 0.0, bc.end.y),
                    airspeed: Some(Vec3::zeros()),
                    drone_accel: None,
                    measured_tension: Some(truth.solution.end_tension()),
                }
            })
            .collect();
        let out = replay(&log, &spec, &ReplayConfig::default()).unwrap();
        for series in [
            out.analytical.as_ref().unwrap(),
            out.numerical.as_ref().unwrap(),
        ] {
            for r in &series.records {
                let truth = r.measured_tension.unwrap();
                assert!(
                    (r.end_tension - truth).abs() <= 0.005 * truth,
                    "{}: {} vs generating {}",
                    series.method,
                    r.end_tension,
                    truth
                );
            }
        }
        // measured-tension comparison flows into the summary
        assert!(out.summaries[0].mean_abs_diff_measured_n.is_some());
    }

    #[test]
    fn series_csv_is_byte_stable() {
        let spec = paper_spec();
        let log = synthetic_log(6, true);
        let config = ReplayConfig::default();
        let mut bufs = Vec::new();
        for _ in 0..2 {
            let out = replay(&log, &spec, &config).unwrap();
            // zero the wall-clock fields: the one nondeterministic input
            let mut a = out.analytical.unwrap();
            let mut n = out.numerical.unwrap();
            for r in a.records.iter_mut().chain(n.records.iter_mut()) {
                r.solve_time = 0.0;
            }
            let mut buf = Vec::new();
            write_series_csv(&mut buf, &[&a, &n]).unwrap();
            bufs.push(buf);
        }
        assert_eq!(bufs[0], bufs[1]);
    }

    #[test]
    fn timing_stats_percentiles() {
        let times: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let stats = TimingStats::from_times(&times).unwrap();
        assert_relative_eq!(stats.mean_s, 50.5);
        assert_relative_eq!(stats.median_s, 50.0);
        assert_relative_eq!(stats.p95_s, 95.0);
    }
}
