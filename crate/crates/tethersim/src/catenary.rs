//! Closed-form catenary solver with a rotated-frame uniform-drag extension.
//!
//! The no-wind tether is the catenary y = a·cosh((x−x0)/a) + y0. The three
//! parameters are pinned by both endpoints lying on the curve and the arc
//! length between them equaling the cable length; a damped Newton iteration
//! solves that 3×3 system from an ordered set of initial guesses.
//!
//! Wind enters as a uniform force per unit length spread over the whole
//! cable. Combined with weight this is still a constant field, so the shape
//! remains a catenary in the coordinate frame rotated to point the combined
//! field down. The drag magnitude depends on the cable's vertical extent,
//! which depends on the solved shape, so the solve iterates that fixed point
//! until the extent estimate converges.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Rotation2};
use thiserror::Error;

use crate::model::{
    rayleigh_drag, ModelError, PlanarBoundary, SolveDiagnostics, SolveMethod, TensionSample,
    TetherSolution, TetherSpec, Vec2,
};
use crate::newton::{solve_root, RootOptions, RootProblem};

/// Solved catenary parameters together with their governing frame.
///
/// `frame_rotation` is the angle θ of the combined gravity+drag field away
/// from straight down; points transform world → frame by a rotation of −θ.
/// With no wind θ = 0 and `effective_w` is the plain weight per length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatenaryParams {
    /// Shape parameter a = H / effective_w [m].
    pub a: f64,
    /// Horizontal offset of the vertex in the rotated frame [m].
    pub x0: f64,
    /// Vertical offset in the rotated frame [m]; the vertex sits at y0 + a.
    pub y0: f64,
    /// Frame rotation θ [rad]; 0 for no-drag solves.
    pub frame_rotation: f64,
    /// Magnitude of the combined gravity+drag field per unit length [N/m].
    pub effective_w: f64,
}

impl CatenaryParams {
    /// Constant horizontal (in the rotated frame) tension H = a·w_eff [N].
    pub fn horizontal_tension(&self) -> f64 {
        self.a * self.effective_w
    }

    /// World point → rotated-frame point.
    pub fn to_frame(&self, p: Vec2) -> Vec2 {
        Rotation2::new(-self.frame_rotation) * p
    }

    /// Rotated-frame point → world point.
    pub fn to_world(&self, p: Vec2) -> Vec2 {
        Rotation2::new(self.frame_rotation) * p
    }
}

/// One initial guess for the 3×3 constraint solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guess {
    pub label: &'static str,
    pub a: f64,
    pub x0: f64,
    pub y0: f64,
}

/// Ordered initial guesses, best empirical win rate first.
#[derive(Debug, Clone, Default)]
pub struct GuessSet {
    pub guesses: Vec<Guess>,
}

/// Parabolic sag estimate for a span.
#[derive(Debug, Clone, Copy)]
pub struct SagEstimate {
    /// Estimated sag below the lower endpoint [m].
    pub sag: f64,
    /// Shape parameter from the parabolic approximation [m];
    /// `None` when the span is taut (zero sag) and the estimate is singular.
    pub shape_parameter: Option<f64>,
}

/// Result of the geometric constraint solve (no physics attached yet).
#[derive(Debug, Clone, Copy)]
pub struct CatenaryFit {
    pub a: f64,
    pub x0: f64,
    pub y0: f64,
    /// Label of the initial guess that converged.
    pub guess: &'static str,
    /// Newton iterations of the successful attempt.
    pub iterations: usize,
    pub residual_norm: f64,
    /// Guesses attempted, including the successful one.
    pub guesses_tried: usize,
}

impl CatenaryFit {
    /// Attaches a frame and field strength to the fitted geometry.
    pub fn into_params(self, frame_rotation: f64, effective_w: f64) -> CatenaryParams {
        CatenaryParams {
            a: self.a,
            x0: self.x0,
            y0: self.y0,
            frame_rotation,
            effective_w,
        }
    }
}

/// Solver controls. Tolerances follow the residual threshold used for both
/// methods (1e-8); the remaining knobs bound the guess and drag iterations.
#[derive(Debug, Clone, Copy)]
pub struct CatenaryOptions {
    /// Residual infinity-norm tolerance.
    pub tol: f64,
    /// Newton iteration cap per initial guess.
    pub max_iters_per_guess: usize,
    /// Consecutive residual-growth steps before a guess is abandoned.
    pub early_abort_growth_steps: usize,
    /// Drag fixed-point tolerance on the vertical extent, as a fraction of L.
    pub drag_extent_tol_factor: f64,
    /// Drag fixed-point iteration cap.
    pub max_drag_iterations: usize,
    /// Horizontal spans below this fraction of L are treated as vertical.
    pub ill_posed_span_factor: f64,
    /// Sample count in the returned solution polyline.
    pub samples: usize,
}

impl Default for CatenaryOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters_per_guess: 25,
            early_abort_growth_steps: 3,
            drag_extent_tol_factor: 1e-4,
            max_drag_iterations: 20,
            ill_posed_span_factor: 1e-3,
            samples: 61,
        }
    }
}

#[derive(Debug, Error)]
pub enum CatenaryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Horizontal span too small for the constraint system to be well posed.
    #[error("ill-posed: horizontal span {horizontal_span:.6} m below {threshold:.6} m; use the vertical-hang special case")]
    IllPosed {
        horizontal_span: f64,
        threshold: f64,
    },
    #[error("all {guesses_tried} initial guesses failed to converge")]
    AllGuessesFailed { guesses_tried: usize },
    #[error("drag iteration did not converge after {iterations} passes (extent error {extent_error:.3e} m)")]
    DragIterationDiverged {
        iterations: usize,
        extent_error: f64,
    },
}

/// Catenary height at `x`, evaluated in the params' rotated frame.
pub fn eval_catenary(params: &CatenaryParams, x: f64) -> f64 {
    params.a * ((x - params.x0) / params.a).cosh() + params.y0
}

/// Arc length of the curve between `xa` and `xb` (rotated-frame abscissae).
pub fn arc_length(params: &CatenaryParams, xa: f64, xb: f64) -> f64 {
    let a = params.a;
    (a * (((xb - params.x0) / a).sinh() - ((xa - params.x0) / a).sinh())).abs()
}

/// Residuals of the two endpoint constraints and the arc-length constraint.
///
/// Boundary coordinates are world coordinates; for rotated params they are
/// transformed into the frame first. All three vanish at a valid solution.
pub fn constraint_residuals(
    params: &CatenaryParams,
    bc: &PlanarBoundary,
    length: f64,
) -> [f64; 3] {
    let p1 = params.to_frame(bc.start);
    let p2 = params.to_frame(bc.end);
    [
        eval_catenary(params, p1.x) - p1.y,
        eval_catenary(params, p2.x) - p2.y,
        arc_length(params, p1.x, p2.x) - length,
    ]
}

/// Sag and shape parameter from the parabolic cable-length relation
/// L = d + 8s²/(3d), solved for s, with a = d²/(8s).
pub fn parabolic_sag_estimate(bc: &PlanarBoundary, length: f64) -> SagEstimate {
    let dx = (bc.end.x - bc.start.x).abs();
    let slack = (length - dx).max(0.0);
    let sag = (0.375 * dx * slack).sqrt();
    let shape_parameter = if sag > 0.0 {
        Some(dx * dx / (8.0 * sag))
    } else {
        None
    };
    SagEstimate {
        sag,
        shape_parameter,
    }
}

/// Initial guesses in empirical win-rate order.
///
/// Rows whose parabolic estimate is singular (taut or vertical spans) are
/// skipped; the heuristic rows remain.
pub fn build_guesses(bc: &PlanarBoundary, length: f64) -> GuessSet {
    let x_mid = 0.5 * (bc.start.x + bc.end.x);
    let y_low = bc.start.y.min(bc.end.y);
    let dx = (bc.end.x - bc.start.x).abs();
    let estimate = parabolic_sag_estimate(bc, length);
    let sag = estimate.sag;

    // Taut-line variant of the parabolic estimate: floor the sag at 1% of
    // the horizontal span so the shape parameter stays finite.
    let a_nosag = {
        let s = sag.max(0.01 * dx);
        if s > 0.0 {
            Some(dx * dx / (8.0 * s))
        } else {
            None
        }
    };

    let parabolic = |label: &'static str, scale: f64| {
        estimate.shape_parameter.map(|a_par| Guess {
            label,
            a: scale * a_par,
            x0: x_mid,
            y0: y_low - sag - scale * a_par,
        })
    };
    let no_sag = |label: &'static str, scale: f64| {
        a_nosag.map(|a| Guess {
            label,
            a: scale * a,
            x0: x_mid,
            y0: y_low - scale * a,
        })
    };

    let rows = [
        parabolic("parabolic-2x", 2.0),
        parabolic("parabolic-1.2x", 1.2),
        Some(Guess {
            label: "large-sag",
            a: length / 8.0,
            x0: x_mid,
            y0: y_low - length / 2.0,
        }),
        no_sag("no-sag-1x", 1.0),
        no_sag("no-sag-2x", 2.0),
        parabolic("parabolic-0.8x", 0.8),
        parabolic("parabolic-1x", 1.0),
    ];
    GuessSet {
        guesses: rows.into_iter().flatten().collect(),
    }
}

/// The 3×3 constraint system in one frame. Endpoints are ordered so that
/// x1 < x2, which removes the absolute value from the arc-length residual.
struct CatenaryProblem {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    length: f64,
}

/// Beyond this normalized abscissa the cosh terms dwarf f64 precision; the
/// residual is treated as out of domain so the line search backs off.
const MAX_COSH_ARG: f64 = 300.0;

impl RootProblem for CatenaryProblem {
    fn dim(&self) -> usize {
        3
    }

    fn residual(&self, z: &DVector<f64>, r: &mut DVector<f64>) {
        let (a, x0, y0) = (z[0], z[1], z[2]);
        let u1 = (self.x1 - x0) / a;
        let u2 = (self.x2 - x0) / a;
        if !(a > 0.0) || u1.abs() > MAX_COSH_ARG || u2.abs() > MAX_COSH_ARG {
            r.fill(f64::INFINITY);
            return;
        }
        r[0] = a * u1.cosh() + y0 - self.y1;
        r[1] = a * u2.cosh() + y0 - self.y2;
        r[2] = a * (u2.sinh() - u1.sinh()) - self.length;
    }

    fn jacobian(&self, z: &DVector<f64>, jac: &mut DMatrix<f64>) {
        let (a, x0) = (z[0], z[1]);
        let u1 = (self.x1 - x0) / a;
        let u2 = (self.x2 - x0) / a;
        let (sh1, ch1) = (u1.sinh(), u1.cosh());
        let (sh2, ch2) = (u2.sinh(), u2.cosh());
        jac[(0, 0)] = ch1 - u1 * sh1;
        jac[(0, 1)] = -sh1;
        jac[(0, 2)] = 1.0;
        jac[(1, 0)] = ch2 - u2 * sh2;
        jac[(1, 1)] = -sh2;
        jac[(1, 2)] = 1.0;
        jac[(2, 0)] = sh2 - sh1 - u2 * ch2 + u1 * ch1;
        jac[(2, 1)] = ch1 - ch2;
        jac[(2, 2)] = 0.0;
    }
}

/// Multi-guess constraint solve for the curve through two points in a given
/// frame. The curve is endpoint-label agnostic, so endpoints may be passed
/// in either order.
fn fit_points(
    p1: Vec2,
    p2: Vec2,
    length: f64,
    options: &CatenaryOptions,
) -> Result<CatenaryFit, CatenaryError> {
    let (left, right) = if p1.x <= p2.x { (p1, p2) } else { (p2, p1) };
    let problem = CatenaryProblem {
        x1: left.x,
        y1: left.y,
        x2: right.x,
        y2: right.y,
        length,
    };
    let root_options = RootOptions {
        tol: options.tol,
        max_iters: options.max_iters_per_guess,
        early_abort_growth_steps: options.early_abort_growth_steps,
        ..RootOptions::default()
    };

    let bc = PlanarBoundary::new(p1, p2, 0.0);
    let guesses = build_guesses(&bc, length);
    let mut tried = 0;
    for guess in &guesses.guesses {
        tried += 1;
        let z0 = DVector::from_row_slice(&[guess.a, guess.x0, guess.y0]);
        if let Ok(solve) = solve_root(&problem, &z0, &root_options) {
            return Ok(CatenaryFit {
                a: solve.state[0],
                x0: solve.state[1],
                y0: solve.state[2],
                guess: guess.label,
                iterations: solve.iterations,
                residual_norm: solve.residual_norm,
                guesses_tried: tried,
            });
        }
    }
    Err(CatenaryError::AllGuessesFailed {
        guesses_tried: tried,
    })
}

/// Solves the no-drag constraint system for a boundary in its own frame.
pub fn solve_catenary(
    bc: &PlanarBoundary,
    length: f64,
    options: &CatenaryOptions,
) -> Result<CatenaryFit, CatenaryError> {
    bc.check_reachable(length)?;
    let span = (bc.end.x - bc.start.x).abs();
    let threshold = options.ill_posed_span_factor * length;
    if span < threshold {
        return Err(CatenaryError::IllPosed {
            horizontal_span: span,
            threshold,
        });
    }
    fit_points(bc.start, bc.end, length, options)
}

/// Like [`solve_catenary`] but from a single caller-chosen guess, with no
/// fallbacks. The benchmark harness races the guess set this way.
pub fn solve_catenary_from(
    bc: &PlanarBoundary,
    length: f64,
    guess: &Guess,
    options: &CatenaryOptions,
) -> Result<CatenaryFit, CatenaryError> {
    bc.check_reachable(length)?;
    let (left, right) = if bc.start.x <= bc.end.x {
        (bc.start, bc.end)
    } else {
        (bc.end, bc.start)
    };
    let problem = CatenaryProblem {
        x1: left.x,
        y1: left.y,
        x2: right.x,
        y2: right.y,
        length,
    };
    let root_options = RootOptions {
        tol: options.tol,
        max_iters: options.max_iters_per_guess,
        early_abort_growth_steps: options.early_abort_growth_steps,
        ..RootOptions::default()
    };
    let z0 = DVector::from_row_slice(&[guess.a, guess.x0, guess.y0]);
    let solve = solve_root(&problem, &z0, &root_options)
        .map_err(|_| CatenaryError::AllGuessesFailed { guesses_tried: 1 })?;
    Ok(CatenaryFit {
        a: solve.state[0],
        x0: solve.state[1],
        y0: solve.state[2],
        guess: guess.label,
        iterations: solve.iterations,
        residual_norm: solve.residual_norm,
        guesses_tried: 1,
    })
}

/// `n` points at equal arc spacing along the solved curve, in world
/// coordinates, first at `bc.start` and last at `bc.end` exactly.
pub fn sample_equal_arc(
    params: &CatenaryParams,
    bc: &PlanarBoundary,
    length: f64,
    n: usize,
) -> Vec<Vec2> {
    assert!(n >= 2, "need at least the two endpoints");
    let start = params.to_frame(bc.start);
    let end = params.to_frame(bc.end);
    let sigma = if end.x >= start.x { 1.0 } else { -1.0 };
    let sh_start = ((start.x - params.x0) / params.a).sinh();

    let mut points = Vec::with_capacity(n);
    points.push(bc.start);
    for k in 1..n - 1 {
        let s = length * k as f64 / (n - 1) as f64;
        let x = params.x0 + params.a * (sh_start + sigma * s / params.a).asinh();
        points.push(params.to_world(Vec2::new(x, eval_catenary(params, x))));
    }
    points.push(bc.end);
    points
}

/// Tension at a world-frame point on the curve: T = w_eff·(y_rot − y0).
pub fn tension_at_point(params: &CatenaryParams, point: Vec2) -> f64 {
    let p = params.to_frame(point);
    params.effective_w * (p.y - params.y0)
}

/// Tension at each of the given world-frame curve points.
pub fn tension_profile(params: &CatenaryParams, points: &[Vec2]) -> Vec<f64> {
    points
        .iter()
        .map(|&p| tension_at_point(params, p))
        .collect()
}

/// Doubled-line solution for near-vertical spans, where the 3×3 system is
/// ill posed. Both strands hang straight down (in the rotated frame) to a
/// free fold; tension grows linearly with distance from the fold.
#[derive(Debug, Clone, Copy)]
pub struct HangShape {
    /// Rotated-frame endpoints and fold point.
    start: Vec2,
    end: Vec2,
    fold: Vec2,
    /// Arc length from the start attachment down to the fold [m].
    start_leg: f64,
    length: f64,
    frame_rotation: f64,
    effective_w: f64,
}

impl HangShape {
    fn new(start: Vec2, end: Vec2, length: f64, frame_rotation: f64, effective_w: f64) -> Self {
        // (y1 - yf) + (y2 - yf) = L, reachability guarantees yf <= min(y1, y2)
        let fold_y = 0.5 * (start.y + end.y - length);
        let fold = Vec2::new(0.5 * (start.x + end.x), fold_y);
        Self {
            start,
            end,
            fold,
            start_leg: start.y - fold_y,
            length,
            frame_rotation,
            effective_w,
        }
    }

    fn point_at_arc(&self, s: f64) -> Vec2 {
        if s <= self.start_leg {
            let t = if self.start_leg > 0.0 {
                s / self.start_leg
            } else {
                1.0
            };
            self.start + t * (self.fold - self.start)
        } else {
            let end_leg = self.length - self.start_leg;
            let t = if end_leg > 0.0 {
                (s - self.start_leg) / end_leg
            } else {
                1.0
            };
            self.fold + t * (self.end - self.fold)
        }
    }

    fn tension_at_arc(&self, s: f64) -> f64 {
        self.effective_w * (s - self.start_leg).abs()
    }
}

/// Shape underlying a solved analytical tether.
#[derive(Debug, Clone, Copy)]
pub enum TetherShape {
    Catenary(CatenaryParams),
    VerticalHang(HangShape),
}

/// Full analytical solve result: the sampled [`TetherSolution`] plus the
/// underlying shape, which callers can resample at arbitrary arc positions
/// (the numerical solver initializes itself this way).
#[derive(Debug, Clone)]
pub struct CatenarySolution {
    pub solution: TetherSolution,
    pub shape: TetherShape,
    pub boundary: PlanarBoundary,
    length: f64,
}

impl CatenarySolution {
    /// `n` world-frame points at equal arc spacing, endpoints exact.
    pub fn equal_arc_points(&self, n: usize) -> Vec<Vec2> {
        match &self.shape {
            TetherShape::Catenary(params) => {
                sample_equal_arc(params, &self.boundary, self.length, n)
            }
            TetherShape::VerticalHang(hang) => {
                assert!(n >= 2);
                let rot = Rotation2::new(hang.frame_rotation);
                let mut points = Vec::with_capacity(n);
                points.push(self.boundary.start);
                for k in 1..n - 1 {
                    let s = self.length * k as f64 / (n - 1) as f64;
                    points.push(rot * hang.point_at_arc(s));
                }
                points.push(self.boundary.end);
                points
            }
        }
    }

    /// Tension at arc position `s` from the start attachment [N].
    pub fn tension_at_arc(&self, s: f64) -> f64 {
        match &self.shape {
            TetherShape::Catenary(params) => {
                let start = params.to_frame(self.boundary.start);
                let end = params.to_frame(self.boundary.end);
                let sigma = if end.x >= start.x { 1.0 } else { -1.0 };
                let sh_start = ((start.x - params.x0) / params.a).sinh();
                let x = params.x0 + params.a * (sh_start + sigma * s / params.a).asinh();
                params.effective_w * (eval_catenary(params, x) - params.y0)
            }
            TetherShape::VerticalHang(hang) => hang.tension_at_arc(s),
        }
    }

    /// Rotation of the solve frame [rad].
    pub fn frame_rotation(&self) -> f64 {
        match &self.shape {
            TetherShape::Catenary(params) => params.frame_rotation,
            TetherShape::VerticalHang(hang) => hang.frame_rotation,
        }
    }
}

/// Signed drag per unit length along +x for a given vertical extent.
fn drag_per_length(spec: &TetherSpec, vertical_extent: f64, airspeed: f64) -> f64 {
    if airspeed == 0.0 {
        return 0.0;
    }
    let area = spec.diameter * vertical_extent;
    rayleigh_drag(spec, area, airspeed) * airspeed.signum() / spec.length
}

/// Total variation of world-frame height along the curve between the two
/// rotated abscissae. Locates the world-frame lowest point so sag below the
/// start attachment is counted on both strands.
fn catenary_world_extent(params: &CatenaryParams, xa: f64, xb: f64) -> f64 {
    let theta = params.frame_rotation;
    let world_y = |x: f64| theta.sin() * x + theta.cos() * eval_catenary(params, x);
    let (lo, hi) = if xa <= xb { (xa, xb) } else { (xb, xa) };
    // dy_world/dx = sinθ + cosθ·sinh((x−x0)/a) vanishes at one abscissa
    let x_crit = params.x0 + params.a * (-theta.tan()).asinh();
    if x_crit > lo && x_crit < hi {
        (world_y(lo) - world_y(x_crit)).abs() + (world_y(hi) - world_y(x_crit)).abs()
    } else {
        (world_y(hi) - world_y(lo)).abs()
    }
}

fn hang_world_extent(hang: &HangShape) -> f64 {
    let rot = Rotation2::new(hang.frame_rotation);
    let y_start = (rot * hang.start).y;
    let y_end = (rot * hang.end).y;
    let y_fold = (rot * hang.fold).y;
    (y_start - y_fold).abs() + (y_end - y_fold).abs()
}

struct FrameSolve {
    shape: TetherShape,
    guess: &'static str,
    iterations: usize,
    residual_norm: f64,
    guesses_tried: usize,
}

/// One pass of the drag loop: solve the shape in the frame rotated by θ.
fn solve_in_frame(
    bc: &PlanarBoundary,
    length: f64,
    theta: f64,
    effective_w: f64,
    options: &CatenaryOptions,
) -> Result<FrameSolve, CatenaryError> {
    let rot = Rotation2::new(-theta);
    let start = rot * bc.start;
    let end = rot * bc.end;
    if (end.x - start.x).abs() < options.ill_posed_span_factor * length {
        return Ok(FrameSolve {
            shape: TetherShape::VerticalHang(HangShape::new(
                start,
                end,
                length,
                theta,
                effective_w,
            )),
            guess: "vertical-hang",
            iterations: 0,
            residual_norm: 0.0,
            guesses_tried: 0,
        });
    }
    let fit = fit_points(start, end, length, options)?;
    Ok(FrameSolve {
        shape: TetherShape::Catenary(fit.into_params(theta, effective_w)),
        guess: fit.guess,
        iterations: fit.iterations,
        residual_norm: fit.residual_norm,
        guesses_tried: fit.guesses_tried,
    })
}

fn world_extent(solve: &FrameSolve, bc: &PlanarBoundary) -> f64 {
    match &solve.shape {
        TetherShape::Catenary(params) => {
            let start = params.to_frame(bc.start);
            let end = params.to_frame(bc.end);
            catenary_world_extent(params, start.x, end.x)
        }
        TetherShape::VerticalHang(hang) => hang_world_extent(hang),
    }
}

/// Full analytical solve: drag fixed point, sampling, tensions, endpoint
/// forces. With zero airspeed this reduces to the plain catenary solve.
pub fn solve_with_drag(
    bc: &PlanarBoundary,
    spec: &TetherSpec,
    options: &CatenaryOptions,
) -> Result<CatenarySolution, CatenaryError> {
    let started = Instant::now();
    bc.check_reachable(spec.length)?;
    let w = spec.weight_per_length();
    let length = spec.length;
    let extent_tol = options.drag_extent_tol_factor * length;

    let mut extent_estimate = (bc.end.y - bc.start.y).abs();
    let mut drag_iterations = 0;
    let frame_solve = loop {
        let f_drag = drag_per_length(spec, extent_estimate, bc.airspeed);
        let theta = f_drag.atan2(w);
        let effective_w = f_drag.hypot(w);
        let solve = solve_in_frame(bc, length, theta, effective_w, options)?;
        if f_drag == 0.0 && bc.airspeed == 0.0 {
            break solve;
        }
        let extent = world_extent(&solve, bc);
        if (extent - extent_estimate).abs() <= extent_tol {
            break solve;
        }
        drag_iterations += 1;
        if drag_iterations >= options.max_drag_iterations {
            return Err(CatenaryError::DragIterationDiverged {
                iterations: drag_iterations,
                extent_error: (extent - extent_estimate).abs(),
            });
        }
        extent_estimate = extent;
    };

    let solution = build_solution(&frame_solve, bc, length, options.samples, SolveDiagnostics {
        iterations: frame_solve.iterations,
        residual_norm: frame_solve.residual_norm,
        solve_time: 0.0,
        strategy: frame_solve.guess.to_string(),
        drag_iterations,
        guesses_tried: frame_solve.guesses_tried,
    });
    let mut result = CatenarySolution {
        solution,
        shape: frame_solve.shape,
        boundary: *bc,
        length,
    };
    result.solution.diagnostics.solve_time = started.elapsed().as_secs_f64();
    Ok(result)
}

fn build_solution(
    frame_solve: &FrameSolve,
    bc: &PlanarBoundary,
    length: f64,
    n_samples: usize,
    diagnostics: SolveDiagnostics,
) -> TetherSolution {
    let n = n_samples.max(2);
    match &frame_solve.shape {
        TetherShape::Catenary(params) => {
            let start = params.to_frame(bc.start);
            let end = params.to_frame(bc.end);
            let sigma = if end.x >= start.x { 1.0 } else { -1.0 };
            let points = sample_equal_arc(params, bc, length, n);
            let samples = points
                .iter()
                .enumerate()
                .map(|(k, &point)| TensionSample {
                    arc_position: length * k as f64 / (n - 1) as f64,
                    point,
                    tension: tension_at_point(params, point),
                })
                .collect();

            // The cable exerts H·(±1, sinh) on its attachments: the tangent
            // tension vector pointing from the attachment into the cable.
            let h = params.horizontal_tension();
            let sh = |x: f64| ((x - params.x0) / params.a).sinh();
            let start_force = params.to_world(sigma * h * Vec2::new(1.0, sh(start.x)));
            let end_force = params.to_world(-sigma * h * Vec2::new(1.0, sh(end.x)));
            TetherSolution {
                samples,
                start_force,
                end_force,
                method: SolveMethod::Analytical,
                diagnostics,
            }
        }
        TetherShape::VerticalHang(hang) => {
            let rot = Rotation2::new(hang.frame_rotation);
            let samples = (0..n)
                .map(|k| {
                    let s = length * k as f64 / (n - 1) as f64;
                    let point = match k {
                        0 => bc.start,
                        k if k == n - 1 => bc.end,
                        _ => rot * hang.point_at_arc(s),
                    };
                    TensionSample {
                        arc_position: s,
                        point,
                        tension: hang.tension_at_arc(s),
                    }
                })
                .collect();
            // Both strands pull their attachment straight toward the fold.
            let pull = |from: Vec2, leg: f64| {
                let dir = (hang.fold - from).normalize();
                rot * (hang.effective_w * leg * dir)
            };
            let end_leg = hang.length - hang.start_leg;
            TetherSolution {
                samples,
                start_force: pull(hang.start, hang.start_leg),
                end_force: pull(hang.end, end_leg),
                method: SolveMethod::Analytical,
                diagnostics,
            }
        }
    }
}

/// Drag-frame rotation from the initial vertical-extent estimate. The
/// numerical module's fallback rule evaluates its span check in this frame.
pub fn drag_rotation_estimate(bc: &PlanarBoundary, spec: &TetherSpec) -> f64 {
    let extent = (bc.end.y - bc.start.y).abs();
    drag_per_length(spec, extent, bc.airspeed).atan2(spec.weight_per_length())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle for symmetric spans: bisection on the closed-form
    /// relation 2a·sinh(dx/(2a)) = L (arc length is monotone decreasing in a).
    fn symmetric_span_oracle(dx: f64, length: f64) -> (f64, f64) {
        let f = |a: f64| 2.0 * a * (dx / (2.0 * a)).sinh() - length;
        let (mut lo, mut hi) = (1e-6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        let x0 = dx / 2.0;
        let y0 = -a * ((0.0 - x0) / a).cosh();
        (a, y0)
    }

    fn params(a: f64, x0: f64, y0: f64) -> CatenaryParams {
        CatenaryParams {
            a,
            x0,
            y0,
            frame_rotation: 0.0,
            effective_w: 1.0,
        }
    }

    fn paper_spec() -> TetherSpec {
        TetherSpec::from_total_mass(32.0, 0.450, 0.0026, 1.2).unwrap()
    }

    fn symmetric_bc() -> PlanarBoundary {
        PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), 0.0)
    }

    #[test]
    fn oracle_matches_frozen_values() {
        let (a, y0) = symmetric_span_oracle(10.0, 12.0);
        assert_relative_eq!(a, 4.6954152312652795, epsilon = 1e-9);
        assert_relative_eq!(y0, -7.618853207274568, epsilon = 1e-9);
        // arc length by construction
        let p = params(a, 5.0, y0);
        assert_abs_diff_eq!(arc_length(&p, 0.0, 10.0), 12.0, epsilon = 1e-6);
    }

    #[test]
    fn eval_catenary_known_points() {
        assert_relative_eq!(eval_catenary(&params(1.0, 0.0, 0.0), 0.0), 1.0);
        assert_relative_eq!(eval_catenary(&params(1.0, 0.0, -1.0), 0.0), 0.0);
        let (a, y0) = symmetric_span_oracle(10.0, 12.0);
        assert_abs_diff_eq!(eval_catenary(&params(a, 5.0, y0), 0.0), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn arc_length_closed_form() {
        let p = params(1.0, 0.0, 0.0);
        assert_relative_eq!(arc_length(&p, 0.0, 1.0), 1.1752011936438014, epsilon = 1e-12);
        assert_eq!(arc_length(&p, 0.7, 0.7), 0.0);
    }

    #[test]
    fn constraint_residuals_at_and_off_solution() {
        let (a, y0) = symmetric_span_oracle(10.0, 12.0);
        let bc = symmetric_bc();
        let solved = params(a, 5.0, y0);
        let r = constraint_residuals(&solved, &bc, 12.0);
        for ri in r {
            assert!(ri.abs() <= 1e-8, "residual {ri} above tolerance");
        }

        // unit catenary vs p1=(0,0): height residual is cosh(0) = 1
        let off = constraint_residuals(&params(1.0, 0.0, 0.0), &bc, 12.0);
        assert_relative_eq!(off[0], 1.0, epsilon = 1e-12);

        // perturbing a solved `a` by +1% must disturb the arc length
        let perturbed = params(a * 1.01, 5.0, y0);
        let r3 = constraint_residuals(&perturbed, &bc, 12.0)[2];
        assert!(r3.abs() > 1e-6);
    }

    #[test]
    fn parabolic_estimate_hand_values() {
        let est = parabolic_sag_estimate(&symmetric_bc(), 12.0);
        assert_relative_eq!(est.sag, 2.7386127875258306, epsilon = 1e-12);
        assert_relative_eq!(
            est.shape_parameter.unwrap(),
            4.564354645876384,
            epsilon = 1e-12
        );

        // taut span: singular
        let taut = parabolic_sag_estimate(&symmetric_bc(), 10.0);
        assert_eq!(taut.sag, 0.0);
        assert!(taut.shape_parameter.is_none());

        // dx -> 0 with fixed length: sag estimate collapses
        let vertical = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(0.0, 10.0), 0.0);
        assert_eq!(parabolic_sag_estimate(&vertical, 12.0).sag, 0.0);
    }

    #[test]
    fn guess_order_and_values() {
        let bc = symmetric_bc();
        let set = build_guesses(&bc, 12.0);
        let labels: Vec<_> = set.guesses.iter().map(|g| g.label).collect();
        assert_eq!(
            labels,
            vec![
                "parabolic-2x",
                "parabolic-1.2x",
                "large-sag",
                "no-sag-1x",
                "no-sag-2x",
                "parabolic-0.8x",
                "parabolic-1x",
            ]
        );
        for g in &set.guesses {
            assert_eq!(g.x0, 5.0);
            assert!(g.a > 0.0);
        }
        let large_sag = set.guesses.iter().find(|g| g.label == "large-sag").unwrap();
        assert_relative_eq!(large_sag.a, 1.5);
        assert_relative_eq!(large_sag.y0, -6.0);
    }

    #[test]
    fn solve_matches_symmetric_oracle() {
        let (a_oracle, y0_oracle) = symmetric_span_oracle(10.0, 12.0);
        let fit = solve_catenary(&symmetric_bc(), 12.0, &CatenaryOptions::default()).unwrap();
        assert_relative_eq!(fit.a, a_oracle, epsilon = 1e-7);
        assert_relative_eq!(fit.x0, 5.0, epsilon = 1e-7);
        assert_relative_eq!(fit.y0, y0_oracle, epsilon = 1e-7);
        assert!(fit.residual_norm <= 1e-8);
    }

    #[test]
    fn solve_taut_span() {
        let (a_oracle, _) = symmetric_span_oracle(10.0, 10.0001);
        let fit = solve_catenary(&symmetric_bc(), 10.0001, &CatenaryOptions::default()).unwrap();
        assert_relative_eq!(fit.a, a_oracle, max_relative = 1e-6);
        assert!(fit.residual_norm <= 1e-8);
    }

    #[test]
    fn vertical_span_is_ill_posed() {
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(0.0, 30.0), 0.0);
        let err = solve_catenary(&bc, 32.0, &CatenaryOptions::default()).unwrap_err();
        assert!(matches!(err, CatenaryError::IllPosed { .. }));
    }

    #[test]
    fn unreachable_span_rejected() {
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(13.0, 0.0), 0.0);
        let err = solve_catenary(&bc, 12.0, &CatenaryOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            CatenaryError::Model(ModelError::Unreachable { .. })
        ));
    }

    #[test]
    fn equal_arc_sampling_basics() {
        let fit = solve_catenary(&symmetric_bc(), 12.0, &CatenaryOptions::default()).unwrap();
        let p = fit.into_params(0.0, 1.0);
        let bc = symmetric_bc();

        let two = sample_equal_arc(&p, &bc, 12.0, 2);
        assert_eq!(two, vec![bc.start, bc.end]);

        let three = sample_equal_arc(&p, &bc, 12.0, 3);
        assert_abs_diff_eq!(three[1].x, 5.0, epsilon = 1e-9);
    }

    /// Simpson quadrature of the arc-length integrand, independent of the
    /// closed-form sinh expression used by the sampler.
    fn arc_quadrature(p: &CatenaryParams, xa: f64, xb: f64) -> f64 {
        let n = 2000;
        let h = (xb - xa) / n as f64;
        let f = |x: f64| ((x - p.x0) / p.a).cosh();
        let mut sum = f(xa) + f(xb);
        for i in 1..n {
            let x = xa + i as f64 * h;
            sum += if i % 2 == 0 { 2.0 } else { 4.0 } * f(x);
        }
        (sum * h / 3.0).abs()
    }

    #[test]
    fn equal_arc_gaps_match_quadrature() {
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 6.0), 0.0);
        let length = 14.0;
        let fit = solve_catenary(&bc, length, &CatenaryOptions::default()).unwrap();
        let p = fit.into_params(0.0, 1.0);
        let points = sample_equal_arc(&p, &bc, length, 61);
        assert_eq!(points.len(), 61);
        let target = length / 60.0;
        for pair in points.windows(2) {
            let gap = arc_quadrature(&p, pair[0].x, pair[1].x);
            assert_abs_diff_eq!(gap, target, epsilon = 1e-9 * length);
        }
    }

    #[test]
    fn tension_identities() {
        let (a, y0) = symmetric_span_oracle(10.0, 12.0);
        let spec = paper_spec();
        let w = spec.weight_per_length();
        let p = CatenaryParams {
            a,
            x0: 5.0,
            y0,
            frame_rotation: 0.0,
            effective_w: w,
        };
        // vertex tension equals the horizontal tension H = w·a
        let vertex = Vec2::new(5.0, y0 + a);
        assert_relative_eq!(
            tension_at_point(&p, vertex),
            0.647747204325643,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            tension_at_point(&p, vertex),
            p.horizontal_tension(),
            epsilon = 1e-12
        );
        // tension is monotone in rotated height
        let profile = tension_profile(&p, &[vertex, Vec2::new(2.0, eval_catenary(&p, 2.0))]);
        assert!(profile[1] > profile[0]);
    }

    #[test]
    fn horizontal_tension_constant_along_curve() {
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 4.0), 0.0);
        let spec = paper_spec();
        let fit = solve_catenary(&bc, 13.0, &CatenaryOptions::default()).unwrap();
        let p = fit.into_params(0.0, spec.weight_per_length());
        let h = p.horizontal_tension();
        for point in sample_equal_arc(&p, &bc, 13.0, 41) {
            let t = tension_at_point(&p, point);
            let slope = ((point.x - p.x0) / p.a).sinh();
            let horizontal = t / (1.0 + slope * slope).sqrt();
            assert_abs_diff_eq!(horizontal, h, epsilon = 1e-9 * h.max(1.0));
        }
    }

    #[test]
    fn no_wind_solution_matches_plain_solve() {
        let spec = paper_spec();
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 28.0), 0.0);
        let full = solve_with_drag(&bc, &spec, &CatenaryOptions::default()).unwrap();
        let fit = solve_catenary(&bc, spec.length, &CatenaryOptions::default()).unwrap();
        match full.shape {
            TetherShape::Catenary(p) => {
                assert_eq!(p.frame_rotation, 0.0);
                assert_relative_eq!(p.effective_w, spec.weight_per_length());
                assert_relative_eq!(p.a, fit.a, epsilon = 1e-12);
            }
            TetherShape::VerticalHang(_) => panic!("expected catenary shape"),
        }
        assert_eq!(full.solution.diagnostics.drag_iterations, 0);
        // |end_force| equals the tension of the last sample
        let last = full.solution.samples.last().unwrap();
        assert_relative_eq!(full.solution.end_tension(), last.tension, epsilon = 1e-9);
    }

    #[test]
    fn solution_samples_are_well_formed() {
        let spec = paper_spec();
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(12.0, 25.0), 5.0);
        let full = solve_with_drag(&bc, &spec, &CatenaryOptions::default()).unwrap();
        let samples = &full.solution.samples;
        assert_eq!(samples.first().unwrap().point, bc.start);
        assert_eq!(samples.last().unwrap().point, bc.end);
        for pair in samples.windows(2) {
            assert!(pair[1].arc_position > pair[0].arc_position);
        }
        for s in samples {
            assert!(s.tension >= 0.0);
        }
    }

    #[test]
    fn drag_solve_closes_global_force_balance() {
        let spec = paper_spec();
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(12.0, 25.0), 6.0);
        let full = solve_with_drag(&bc, &spec, &CatenaryOptions::default()).unwrap();
        let (theta, effective_w) = match full.shape {
            TetherShape::Catenary(p) => (p.frame_rotation, p.effective_w),
            TetherShape::VerticalHang(h) => (h.frame_rotation, h.effective_w),
        };
        // combined field total, rotated back to world coordinates
        let applied = Rotation2::new(theta) * Vec2::new(0.0, -effective_w * spec.length);
        let closure = full.solution.start_force + full.solution.end_force - applied;
        assert!(closure.norm() <= 1e-6, "balance closure {closure:?}");
        // drag fixed point: recomputing the extent shifts tension marginally
        let extent = world_extent(
            &FrameSolve {
                shape: full.shape,
                guess: "",
                iterations: 0,
                residual_norm: 0.0,
                guesses_tried: 0,
            },
            &bc,
        );
        let refreshed = drag_per_length(&spec, extent, bc.airspeed);
        let used = theta.tan() * spec.weight_per_length();
        assert_abs_diff_eq!(
            refreshed,
            used,
            epsilon = drag_per_length(&spec, 1.0, bc.airspeed).abs()
                * CatenaryOptions::default().drag_extent_tol_factor
                * spec.length
                * 2.0
        );
    }

    #[test]
    fn tight_cable_in_strong_wind_carries_large_force() {
        let mut spec = paper_spec();
        spec.length = 32.05;
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(20.0, 25.0), 15.0);
        let full = solve_with_drag(&bc, &spec, &CatenaryOptions::default()).unwrap();
        assert!(
            full.solution.end_tension() > 3.0 * spec.total_weight(),
            "end tension {} vs weight {}",
            full.solution.end_tension(),
            spec.total_weight()
        );
    }

    #[test]
    fn swapped_endpoints_mirror_the_solution() {
        let spec = paper_spec();
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 20.0), 0.0);
        let swapped = PlanarBoundary::new(bc.end, bc.start, 0.0);
        let a = solve_with_drag(&bc, &spec, &CatenaryOptions::default()).unwrap();
        let b = solve_with_drag(&swapped, &spec, &CatenaryOptions::default()).unwrap();
        assert_relative_eq!(
            a.solution.end_tension(),
            b.solution.start_tension(),
            epsilon = 1e-9
        );
        let fa = a.solution.end_force;
        let fb = b.solution.start_force;
        assert_abs_diff_eq!(fa.x, fb.x, epsilon = 1e-9);
        assert_abs_diff_eq!(fa.y, fb.y, epsilon = 1e-9);
    }

    #[test]
    fn vertical_hang_special_case() {
        let spec = paper_spec();
        let w = spec.weight_per_length();
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(0.0, 30.0), 0.0);
        let full = solve_with_drag(&bc, &spec, &CatenaryOptions::default()).unwrap();
        // fold at (y1 + y2 - L)/2 = -1: legs of 1 m and 31 m
        assert_relative_eq!(full.solution.start_tension(), w * 1.0, epsilon = 1e-9);
        assert_relative_eq!(full.solution.end_tension(), w * 31.0, epsilon = 1e-9);
        // both attachments are pulled straight down
        assert!(full.solution.start_force.y < 0.0);
        assert!(full.solution.end_force.y < 0.0);
        assert_abs_diff_eq!(full.solution.start_force.x, 0.0, epsilon = 1e-12);
        // balance: the two pulls add up to the cable weight
        let total = full.solution.start_force + full.solution.end_force;
        assert_abs_diff_eq!(total.y, -spec.total_weight(), epsilon = 1e-9);
        for s in &full.solution.samples {
            assert!(s.tension >= 0.0);
        }
    }

    #[test]
    fn frame_rotation_covariance() {
        // Solving in a pre-rotated frame and mapping back must reproduce the
        // direct solution: the rotation plumbing is covariant.
        let options = CatenaryOptions::default();
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(9.0, 14.0), 0.0);
        let length = 18.0;
        let phi = 0.37;

        let direct = solve_in_frame(&bc, length, 0.0, 1.0, &options).unwrap();
        let rotated = solve_in_frame(&bc, length, phi, 1.0, &options).unwrap();
        // The rotated solve models a different field direction, so compare a
        // pure-geometry invariant instead: rotating the boundary by φ and
        // solving with θ = φ must give the same world-frame samples as θ = 0
        // on the original boundary.
        let rot = Rotation2::new(phi);
        let bc_rot = PlanarBoundary::new(rot * bc.start, rot * bc.end, 0.0);
        let re_solved = solve_in_frame(&bc_rot, length, phi, 1.0, &options).unwrap();
        let (TetherShape::Catenary(p_direct), TetherShape::Catenary(p_re)) =
            (&direct.shape, &re_solved.shape)
        else {
            panic!("expected catenary shapes");
        };
        let direct_points = sample_equal_arc(p_direct, &bc, length, 21);
        let re_points = sample_equal_arc(p_re, &bc_rot, length, 21);
        for (d, r) in direct_points.iter().zip(re_points.iter()) {
            let back = rot.inverse() * r;
            assert_abs_diff_eq!(d.x, back.x, epsilon = 1e-9);
            assert_abs_diff_eq!(d.y, back.y, epsilon = 1e-9);
        }
        // the intermediate rotated solve exists and solved something sane
        assert!(matches!(rotated.shape, TetherShape::Catenary(_)));
    }

    #[test]
    fn randomized_family_always_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let options = CatenaryOptions::default();
        let length = 32.0;
        for _ in 0..200 {
            let dx = rng.random_range(0.05_f64..=0.999) * length;
            let mut dy = rng.random_range(-0.9_f64..=0.9) * length;
            let max_dy = (length * length * 0.998 - dx * dx).max(0.0).sqrt();
            dy = dy.clamp(-max_dy, max_dy);
            let bc = PlanarBoundary::new(Vec2::new(3.0, 1.0), Vec2::new(3.0 + dx, 1.0 + dy), 0.0);
            let fit = solve_catenary(&bc, length, &options)
                .unwrap_or_else(|e| panic!("dx={dx} dy={dy}: {e}"));
            let r = constraint_residuals(
                &fit.into_params(0.0, 1.0),
                &bc,
                length,
            );
            for ri in r {
                assert!(ri.abs() <= 1e-8);
            }
        }
    }
}
