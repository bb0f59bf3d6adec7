//! Fixed-seed scenario generation and solver timing.
//!
//! Two scenario families drive the timing comparisons: a randomized set of
//! reachable boundaries spanning taut to saggy geometries, and a smooth
//! synthetic flight trace (moving base, drone near 30 m altitude, speeds up
//! to ~8 m/s) whose temporal coherence is what warm starting exploits.
//! Absolute times depend on the machine; the comparisons of interest are
//! the ratios between initialization strategies.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::catenary::{build_guesses, solve_catenary_from, solve_with_drag, CatenaryOptions};
use crate::lumped::{
    init_from_analytical, straight_line_init, warm_start, Environment, EquilibriumOptions,
    EquilibriumSolver, LumpedModel, LumpedState,
};
use crate::model::{PlanarBoundary, TetherSpec, Vec2};
use crate::pipeline::{project_to_plane, FlightSample, TimingStats, Vec3};

/// Randomized reachable boundaries: d_x/L ∈ [0.05, 0.999], height within
/// ±0.9·L, chord capped just under L, airspeed within ±8 m/s.
pub fn random_boundaries(seed: u64, count: usize, length: f64) -> Vec<PlanarBoundary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dx = rng.random_range(0.05_f64..=0.999) * length;
            let mut dy = rng.random_range(-0.9_f64..=0.9) * length;
            let max_dy = (0.998 * length * length - dx * dx).max(0.0).sqrt();
            dy = dy.clamp(-max_dy, max_dy);
            let airspeed = rng.random_range(-8.0_f64..=8.0);
            PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(dx, dy), airspeed)
        })
        .collect()
}

/// Smooth synthetic flight: the base accelerates to 8 m/s and back while
/// the drone holds ~30 m altitude at a drifting horizontal offset. Airspeed
/// columns carry the drone velocity (the low-wind substitution).
pub fn synthetic_flight_trace(n_samples: usize, dt: f64) -> Vec<FlightSample> {
    let duration = (n_samples as f64 * dt).max(dt);
    let omega = std::f64::consts::TAU / duration;
    let w_off = std::f64::consts::TAU / 13.0;
    let w_alt = std::f64::consts::TAU / 7.0;
    (0..n_samples)
        .map(|i| {
            let t = i as f64 * dt;
            let base_x = 4.0 * t - 4.0 / omega * (omega * t).sin();
            let base_v = 4.0 * (1.0 - (omega * t).cos());
            let offset = 6.0 + 2.5 * (w_off * t).sin();
            let d_offset = 2.5 * w_off * (w_off * t).cos();
            let altitude = 29.0 + 0.8 * (w_alt * t).sin();
            let d_altitude = 0.8 * w_alt * (w_alt * t).cos();
            FlightSample {
                t,
                base_pos: Vec3::new(base_x, 0.0, 0.5),
                drone_pos: Vec3::new(base_x + offset, 0.0, altitude),
                airspeed: Some(Vec3::new(base_v + d_offset, 0.0, d_altitude)),
                drone_accel: None,
                measured_tension: None,
            }
        })
        .collect()
}

/// Benchmark controls.
#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub spec: TetherSpec,
    pub seed: u64,
    /// Flight-trace length for the strategy timing comparison.
    pub trace_samples: usize,
    /// Scenario count for the guess win-rate table.
    pub scenario_count: usize,
    pub segments: usize,
    pub tol: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            spec: TetherSpec::from_total_mass(32.0, 0.450, 0.0026, 1.2)
                .expect("reference cable spec"),
            seed: 42,
            trace_samples: 200,
            scenario_count: 1000,
            segments: 60,
            tol: 1e-8,
        }
    }
}

/// Timing distribution of one solve strategy over the trace.
#[derive(Debug, Clone, Serialize)]
pub struct StrategyBenchmark {
    pub strategy: &'static str,
    pub n_samples: usize,
    pub n_failed: usize,
    pub timing: Option<TimingStats>,
}

/// Win count of one initial guess in the per-scenario race.
#[derive(Debug, Clone, Serialize)]
pub struct GuessWin {
    pub label: &'static str,
    pub wins: usize,
    /// Share of decided scenarios, in percent.
    pub percent: f64,
}

/// Full benchmark result.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub strategies: Vec<StrategyBenchmark>,
    pub guess_wins: Vec<GuessWin>,
    pub trace_samples: usize,
    pub scenario_count: usize,
    pub total_runtime_s: f64,
}

impl BenchReport {
    pub fn strategy(&self, name: &str) -> Option<&StrategyBenchmark> {
        self.strategies.iter().find(|s| s.strategy == name)
    }
}

/// Runs the full benchmark: per-strategy timing over the synthetic flight
/// trace plus the guess win-rate table over the randomized family.
pub fn run_bench(config: &BenchConfig) -> BenchReport {
    let started = Instant::now();
    let spec = config.spec;
    let catenary_options = CatenaryOptions {
        tol: config.tol,
        ..CatenaryOptions::default()
    };

    let trace = synthetic_flight_trace(config.trace_samples, 0.1);
    let projected: Vec<(PlanarBoundary, Environment)> = trace
        .iter()
        .map(|s| {
            let p = project_to_plane(s).expect("trace geometry is non-degenerate");
            (p.boundary, p.environment)
        })
        .collect();

    // Analytical method, full pipeline (drag loop and multi-guess included).
    let mut analytical_times = Vec::with_capacity(projected.len());
    let mut analytical_failed = 0usize;
    let mut solutions = Vec::with_capacity(projected.len());
    for (bc, _) in &projected {
        match solve_with_drag(bc, &spec, &catenary_options) {
            Ok(solution) => {
                analytical_times.push(solution.solution.diagnostics.solve_time);
                solutions.push(Some(solution));
            }
            Err(_) => {
                analytical_failed += 1;
                solutions.push(None);
            }
        }
    }

    let model = LumpedModel::new(spec, config.segments).expect("segment count >= 2");
    let solver = EquilibriumSolver::new(model).with_options(EquilibriumOptions {
        tol: config.tol,
        ..EquilibriumOptions::default()
    });

    // Numerical, analytical initialization. Building the init state is not
    // counted; only the equilibrium solve is timed.
    let mut analytical_init_times = Vec::new();
    let mut analytical_init_failed = 0usize;
    for (i, (bc, env)) in projected.iter().enumerate() {
        let Some(analytical) = &solutions[i] else {
            analytical_init_failed += 1;
            continue;
        };
        let init = init_from_analytical(analytical, solver.model());
        match solver.solve(bc, env, &init, "analytical-init") {
            Ok(s) => analytical_init_times.push(s.solution.diagnostics.solve_time),
            Err(_) => analytical_init_failed += 1,
        }
    }

    // Numerical, warm-start chain (first sample analytically initialized).
    let mut warm_times = Vec::new();
    let mut warm_failed = 0usize;
    let mut previous: Option<LumpedState> = None;
    for (i, (bc, env)) in projected.iter().enumerate() {
        let init = match &previous {
            Some(state) => warm_start(state, bc, solver.model()).ok(),
            None => solutions[i]
                .as_ref()
                .map(|a| init_from_analytical(a, solver.model())),
        };
        let Some(init) = init else {
            warm_failed += 1;
            previous = None;
            continue;
        };
        match solver.solve(bc, env, &init, "warm-start") {
            Ok(s) => {
                warm_times.push(s.solution.diagnostics.solve_time);
                previous = Some(s.state);
            }
            Err(_) => {
                warm_failed += 1;
                previous = None;
            }
        }
    }

    // Numerical, straight-line initialization.
    let mut straight_times = Vec::new();
    let mut straight_failed = 0usize;
    for (bc, env) in &projected {
        let init = straight_line_init(bc, solver.model());
        match solver.solve(bc, env, &init, "straight-line") {
            Ok(s) => straight_times.push(s.solution.diagnostics.solve_time),
            Err(_) => straight_failed += 1,
        }
    }

    // Guess win-rate table: race every guess on every randomized scenario,
    // fastest converged solve wins.
    let boundaries = random_boundaries(
        config.seed.wrapping_add(1),
        config.scenario_count,
        spec.length,
    );
    let labels: Vec<&'static str> = build_guesses(
        &PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 0.0),
        2.0,
    )
    .guesses
    .iter()
    .map(|g| g.label)
    .collect();
    let mut wins: Vec<(&'static str, usize)> = labels.iter().map(|l| (*l, 0)).collect();
    let mut decided = 0usize;
    for bc in &boundaries {
        let mut best: Option<(&'static str, f64)> = None;
        for guess in &build_guesses(bc, spec.length).guesses {
            let t0 = Instant::now();
            if solve_catenary_from(bc, spec.length, guess, &catenary_options).is_ok() {
                let elapsed = t0.elapsed().as_secs_f64();
                if best.map_or(true, |(_, t)| elapsed < t) {
                    best = Some((guess.label, elapsed));
                }
            }
        }
        if let Some((label, _)) = best {
            decided += 1;
            if let Some(entry) = wins.iter_mut().find(|(l, _)| *l == label) {
                entry.1 += 1;
            }
        }
    }
    let guess_wins = wins
        .into_iter()
        .map(|(label, count)| GuessWin {
            label,
            wins: count,
            percent: if decided > 0 {
                100.0 * count as f64 / decided as f64
            } else {
                0.0
            },
        })
        .collect();

    let n = projected.len();
    BenchReport {
        strategies: vec![
            StrategyBenchmark {
                strategy: "analytical",
                n_samples: n,
                n_failed: analytical_failed,
                timing: TimingStats::from_times(&analytical_times),
            },
            StrategyBenchmark {
                strategy: "numerical-analytical-init",
                n_samples: n,
                n_failed: analytical_init_failed,
                timing: TimingStats::from_times(&analytical_init_times),
            },
            StrategyBenchmark {
                strategy: "numerical-warm-start",
                n_samples: n,
                n_failed: warm_failed,
                timing: TimingStats::from_times(&warm_times),
            },
            StrategyBenchmark {
                strategy: "numerical-straight-line",
                n_samples: n,
                n_failed: straight_failed,
                timing: TimingStats::from_times(&straight_times),
            },
        ],
        guess_wins,
        trace_samples: config.trace_samples,
        scenario_count: config.scenario_count,
        total_runtime_s: started.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_are_reachable_and_in_range() {
        let length = 32.0;
        let boundaries = random_boundaries(7, 500, length);
        assert_eq!(boundaries.len(), 500);
        for bc in &boundaries {
            let dx = (bc.end.x - bc.start.x).abs();
            assert!(dx >= 0.05 * length - 1e-9 && dx <= 0.999 * length + 1e-9);
            assert!(bc.chord() <= length);
            assert!(bc.airspeed.abs() <= 8.0);
        }
        // deterministic for a fixed seed
        let again = random_boundaries(7, 500, length);
        assert_eq!(boundaries[13], again[13]);
    }

    #[test]
    fn trace_is_shaped_like_the_validation_flight() {
        let trace = synthetic_flight_trace(200, 0.1);
        assert_eq!(trace.len(), 200);
        let mut max_speed: f64 = 0.0;
        for (i, s) in trace.iter().enumerate() {
            let altitude = s.drone_pos.z - s.base_pos.z;
            assert!((26.0..32.0).contains(&altitude));
            let chord = (s.drone_pos - s.base_pos).norm();
            assert!(chord < 32.0, "sample {i} unreachable: chord {chord}");
            max_speed = max_speed.max(s.airspeed.unwrap().norm());
        }
        assert!((7.0..9.0).contains(&max_speed), "max speed {max_speed}");
    }

    #[test]
    fn small_bench_produces_all_strategies() {
        let config = BenchConfig {
            trace_samples: 12,
            scenario_count: 30,
            ..BenchConfig::default()
        };
        let report = run_bench(&config);
        assert_eq!(report.strategies.len(), 4);
        for s in &report.strategies {
            assert!(
                s.n_failed * 4 <= s.n_samples,
                "{} failed {}/{}",
                s.strategy,
                s.n_failed,
                s.n_samples
            );
            assert!(s.timing.is_some());
        }
        let percent_sum: f64 = report.guess_wins.iter().map(|g| g.percent).sum();
        assert!((percent_sum - 100.0).abs() < 1e-9);
    }
}
