//! Lumped-mass / rigid-segment quasi-static equilibrium solver.
//!
//! The cable is split into `N` rigid segments joined at point masses. The
//! unknowns are the interior node positions plus one tension per segment;
//! the equations demand zero net force at every interior node and the rest
//! length of every segment, a square system solved directly by damped
//! Newton. Tensions enter the iteration as squared variables, which keeps
//! them nonnegative without inequality machinery.
//!
//! Forces besides gravity and tension come from pluggable
//! [`ForceProvider`]s: a per-segment force is split half onto each of the
//! segment's nodes, a per-node force adds directly. Drag ships as a segment
//! provider using the vertical extent of each segment as exposed area; the
//! simplified inertia term ships as a node provider.

use std::cell::RefCell;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2};
use thiserror::Error;

use crate::catenary::{self, CatenarySolution};
use crate::model::{
    rayleigh_drag, ModelError, PlanarBoundary, SolveDiagnostics, SolveMethod, TensionSample,
    TetherSolution, TetherSpec, Vec2,
};
use crate::newton::{solve_root, RootError, RootOptions, RootProblem};

/// Uniform discretization of a tether into rigid segments.
#[derive(Debug, Clone, Copy)]
pub struct LumpedModel {
    pub spec: TetherSpec,
    pub n_segments: usize,
    /// Rest length of every segment, L/N [m].
    pub segment_length: f64,
}

#[derive(Debug, Error)]
pub enum LumpedError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("need at least 2 segments, got {0}")]
    TooFewSegments(usize),
    #[error("state dimensions do not match the model: {nodes} nodes / {tensions} tensions for {expected_nodes} / {expected_tensions}")]
    DimensionMismatch {
        nodes: usize,
        tensions: usize,
        expected_nodes: usize,
        expected_tensions: usize,
    },
    #[error("segment {index} has near-zero length; unit vector undefined")]
    ZeroLengthSegment { index: usize },
    #[error("jacobian became singular after {iterations} iterations")]
    SingularJacobian { iterations: usize },
    #[error("no convergence after {iterations} iterations (residual {residual_norm:.3e})")]
    MaxIterations {
        iterations: usize,
        residual_norm: f64,
    },
    #[error("solve diverged after {iterations} iterations (residual {residual_norm:.3e})")]
    Diverged {
        iterations: usize,
        residual_norm: f64,
    },
    /// The iteration stalled with a tension pinned at zero: the boundary
    /// demands compression, which a cable cannot provide.
    #[error("non-physical solution: tension pinned at zero (min {min_tension:.3e} N) with residual {residual_norm:.3e}")]
    NonPhysical {
        min_tension: f64,
        residual_norm: f64,
    },
}

impl LumpedModel {
    pub fn new(spec: TetherSpec, n_segments: usize) -> Result<Self, LumpedError> {
        if n_segments < 2 {
            return Err(LumpedError::TooFewSegments(n_segments));
        }
        Ok(Self {
            spec,
            n_segments,
            segment_length: spec.length / n_segments as f64,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n_segments + 1
    }

    /// Mass lumped at node `i`: half of each adjacent segment, so endpoint
    /// nodes carry half an interior mass and the total is exactly μ·L.
    pub fn node_mass(&self, i: usize) -> f64 {
        let half = 0.5 * self.spec.linear_mass * self.segment_length;
        if i == 0 || i == self.n_segments {
            half
        } else {
            2.0 * half
        }
    }

    /// Unknowns (and equations): 2(N−1) node balances + N segment lengths.
    pub fn unknown_count(&self) -> usize {
        3 * self.n_segments - 2
    }
}

/// Node positions and per-segment tensions of the discretized tether.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedState {
    /// N+1 node positions; first and last are the attachments.
    pub nodes: Vec<Vec2>,
    /// N segment tensions, all ≥ 0 [N].
    pub tensions: Vec<f64>,
}

impl LumpedState {
    pub fn new(nodes: Vec<Vec2>, tensions: Vec<f64>) -> Self {
        Self { nodes, tensions }
    }

    fn check_dims(&self, model: &LumpedModel) -> Result<(), LumpedError> {
        if self.nodes.len() != model.node_count() || self.tensions.len() != model.n_segments {
            return Err(LumpedError::DimensionMismatch {
                nodes: self.nodes.len(),
                tensions: self.tensions.len(),
                expected_nodes: model.node_count(),
                expected_tensions: model.n_segments,
            });
        }
        Ok(())
    }
}

/// Ambient conditions for one solve.
///
/// `airspeed` is the signed horizontal airflow along the plane's +x axis
/// and should match the boundary's airspeed; `drone_acceleration` feeds the
/// simplified inertia provider and defaults to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub airspeed: f64,
    pub drone_acceleration: Vec2,
}

impl Environment {
    pub fn still() -> Self {
        Self {
            airspeed: 0.0,
            drone_acceleration: Vec2::zeros(),
        }
    }

    pub fn with_airspeed(airspeed: f64) -> Self {
        Self {
            airspeed,
            drone_acceleration: Vec2::zeros(),
        }
    }
}

impl Default for Environment {
    fn default() -> Self {
        Self::still()
    }
}

/// Whether a provider contributes per-segment or per-node forces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceKind {
    Segment,
    Node,
}

/// An extensible force term.
///
/// Segment forces act on the segment as a whole and are split half-and-half
/// onto its two nodes by the assembler. Node forces act on nodes directly;
/// the default Jacobian assumes dependence on the node's own position only,
/// so providers that couple nodes must override `node_force_jacobian`.
pub trait ForceProvider: Send + Sync {
    fn name(&self) -> &'static str;

    fn kind(&self) -> ForceKind;

    /// Fills `out[j]` with the force on segment j+1 (len N).
    fn segment_forces(
        &self,
        nodes: &[Vec2],
        model: &LumpedModel,
        env: &Environment,
        out: &mut [Vec2],
    ) {
        let _ = (nodes, model, env);
        out.fill(Vec2::zeros());
    }

    /// Fills `out[i]` with the force on node i (len N+1, endpoints
    /// included; endpoint entries only affect the reported attachment
    /// forces).
    fn node_forces(
        &self,
        nodes: &[Vec2],
        model: &LumpedModel,
        env: &Environment,
        out: &mut [Vec2],
    ) {
        let _ = (nodes, model, env);
        out.fill(Vec2::zeros());
    }

    /// d(force on segment `j`)/d(first node), d/d(second node); `j` is
    /// 1-based. Default: central finite differences of `segment_forces`.
    fn segment_force_jacobian(
        &self,
        nodes: &[Vec2],
        j: usize,
        model: &LumpedModel,
        env: &Environment,
    ) -> (Matrix2<f64>, Matrix2<f64>) {
        let mut d_first = Matrix2::zeros();
        let mut d_second = Matrix2::zeros();
        let mut work = nodes.to_vec();
        let mut plus = vec![Vec2::zeros(); model.n_segments];
        let mut minus = vec![Vec2::zeros(); model.n_segments];
        for (node, out) in [(j - 1, &mut d_first), (j, &mut d_second)] {
            for coord in 0..2 {
                let base = nodes[node][coord];
                let h = 1e-7 * (1.0 + base.abs());
                work[node][coord] = base + h;
                self.segment_forces(&work, model, env, &mut plus);
                work[node][coord] = base - h;
                self.segment_forces(&work, model, env, &mut minus);
                work[node][coord] = base;
                let df = (plus[j - 1] - minus[j - 1]) / (2.0 * h);
                out[(0, coord)] = df.x;
                out[(1, coord)] = df.y;
            }
        }
        (d_first, d_second)
    }

    /// d(force on node `i`)/d(its own position). Default: central finite
    /// differences of `node_forces`.
    fn node_force_jacobian(
        &self,
        nodes: &[Vec2],
        i: usize,
        model: &LumpedModel,
        env: &Environment,
    ) -> Matrix2<f64> {
        let mut jac = Matrix2::zeros();
        let mut work = nodes.to_vec();
        let mut plus = vec![Vec2::zeros(); model.node_count()];
        let mut minus = vec![Vec2::zeros(); model.node_count()];
        for coord in 0..2 {
            let base = nodes[i][coord];
            let h = 1e-7 * (1.0 + base.abs());
            work[i][coord] = base + h;
            self.node_forces(&work, model, env, &mut plus);
            work[i][coord] = base - h;
            self.node_forces(&work, model, env, &mut minus);
            work[i][coord] = base;
            let df = (plus[i] - minus[i]) / (2.0 * h);
            jac[(0, coord)] = df.x;
            jac[(1, coord)] = df.y;
        }
        jac
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Cross-flow drag on one segment: exposed area d·|Δy|, force along the
/// wind direction.
pub fn segment_drag_force(qa: Vec2, qb: Vec2, spec: &TetherSpec, env: &Environment) -> Vec2 {
    let area = spec.diameter * (qb.y - qa.y).abs();
    let magnitude = rayleigh_drag(spec, area, env.airspeed);
    Vec2::new(magnitude * sign(env.airspeed), 0.0)
}

/// Simplified inertia: the drone's acceleration applied tether-wide,
/// F_i = −m_i·a.
pub fn inertial_node_force(model: &LumpedModel, env: &Environment, i: usize) -> Vec2 {
    -model.node_mass(i) * env.drone_acceleration
}

/// Per-segment cross-flow drag provider.
#[derive(Debug, Clone, Copy, Default)]
pub struct DragProvider;

impl ForceProvider for DragProvider {
    fn name(&self) -> &'static str {
        "drag"
    }

    fn kind(&self) -> ForceKind {
        ForceKind::Segment
    }

    fn segment_forces(
        &self,
        nodes: &[Vec2],
        model: &LumpedModel,
        env: &Environment,
        out: &mut [Vec2],
    ) {
        for (j, force) in out.iter_mut().enumerate() {
            *force = segment_drag_force(nodes[j], nodes[j + 1], &model.spec, env);
        }
    }

    fn segment_force_jacobian(
        &self,
        nodes: &[Vec2],
        j: usize,
        model: &LumpedModel,
        env: &Environment,
    ) -> (Matrix2<f64>, Matrix2<f64>) {
        // F_x = c·|Δy| with c carrying the wind sign; the kink at Δy = 0
        // takes the zero subgradient.
        let v = env.airspeed;
        let c = 0.5
            * model.spec.air_density
            * model.spec.drag_coefficient
            * model.spec.diameter
            * v
            * v.abs();
        let s = sign(nodes[j].y - nodes[j - 1].y);
        let mut d_first = Matrix2::zeros();
        let mut d_second = Matrix2::zeros();
        d_first[(0, 1)] = -c * s;
        d_second[(0, 1)] = c * s;
        (d_first, d_second)
    }
}

/// Simplified inertia provider (node-force route of the force decision
/// diagram).
#[derive(Debug, Clone, Copy, Default)]
pub struct InertiaProvider;

impl ForceProvider for InertiaProvider {
    fn name(&self) -> &'static str {
        "inertia"
    }

    fn kind(&self) -> ForceKind {
        ForceKind::Node
    }

    fn node_forces(
        &self,
        _nodes: &[Vec2],
        model: &LumpedModel,
        env: &Environment,
        out: &mut [Vec2],
    ) {
        for (i, force) in out.iter_mut().enumerate() {
            *force = inertial_node_force(model, env, i);
        }
    }

    fn node_force_jacobian(
        &self,
        _nodes: &[Vec2],
        _i: usize,
        _model: &LumpedModel,
        _env: &Environment,
    ) -> Matrix2<f64> {
        Matrix2::zeros()
    }
}

// Residual vector layout: one 3-row block per segment/node pair
//   [len_1, node_1.x, node_1.y, len_2, node_2.x, node_2.y, …, len_N]
// mirrored by the unknown layout [s_1, q_1.x, q_1.y, …, s_N] with
// T_j = s_j². Both index helpers below are 1-based like the math.

/// Residual row of segment j's length constraint.
pub fn segment_residual_index(j: usize) -> usize {
    3 * (j - 1)
}

/// Residual rows of interior node i's force balance (x, y).
pub fn node_residual_index(i: usize) -> (usize, usize) {
    (3 * (i - 1) + 1, 3 * (i - 1) + 2)
}

/// Sums all provider forces for the given node positions.
fn eval_provider_forces(
    nodes: &[Vec2],
    model: &LumpedModel,
    env: &Environment,
    providers: &[Box<dyn ForceProvider>],
    seg_forces: &mut [Vec2],
    node_forces: &mut [Vec2],
    scratch: &mut Vec<Vec2>,
) {
    seg_forces.fill(Vec2::zeros());
    node_forces.fill(Vec2::zeros());
    for provider in providers {
        match provider.kind() {
            ForceKind::Segment => {
                scratch.clear();
                scratch.resize(seg_forces.len(), Vec2::zeros());
                provider.segment_forces(nodes, model, env, scratch);
                for (total, f) in seg_forces.iter_mut().zip(scratch.iter()) {
                    *total += *f;
                }
            }
            ForceKind::Node => {
                scratch.clear();
                scratch.resize(node_forces.len(), Vec2::zeros());
                provider.node_forces(nodes, model, env, scratch);
                for (total, f) in node_forces.iter_mut().zip(scratch.iter()) {
                    *total += *f;
                }
            }
        }
    }
}

/// Writes the residuals for explicit node positions and tensions. Shared by
/// the public [`assemble_residuals`] and the Newton iteration.
fn residuals_into(
    nodes: &[Vec2],
    tensions: &[f64],
    model: &LumpedModel,
    seg_forces: &[Vec2],
    node_forces: &[Vec2],
    out: &mut DVector<f64>,
) -> Result<(), LumpedError> {
    let n = model.n_segments;
    let g = model.spec.gravity;
    let rest = model.segment_length;

    let mut unit = vec![Vec2::zeros(); n];
    for j in 1..=n {
        let d = nodes[j] - nodes[j - 1];
        let len = d.norm();
        if len < 1e-12 {
            return Err(LumpedError::ZeroLengthSegment { index: j });
        }
        unit[j - 1] = d / len;
        out[segment_residual_index(j)] = len - rest;
    }
    for i in 1..n {
        let balance = tensions[i] * unit[i] - tensions[i - 1] * unit[i - 1]
            + Vec2::new(0.0, -model.node_mass(i) * g)
            + 0.5 * (seg_forces[i - 1] + seg_forces[i])
            + node_forces[i];
        let (rx, ry) = node_residual_index(i);
        out[rx] = balance.x;
        out[ry] = balance.y;
    }
    Ok(())
}

/// Residuals of a state: segment-length errors and interior node force
/// balances, in the documented block layout.
pub fn assemble_residuals(
    state: &LumpedState,
    model: &LumpedModel,
    env: &Environment,
    providers: &[Box<dyn ForceProvider>],
) -> Result<DVector<f64>, LumpedError> {
    state.check_dims(model)?;
    let n = model.n_segments;
    let mut seg_forces = vec![Vec2::zeros(); n];
    let mut node_forces = vec![Vec2::zeros(); n + 1];
    let mut scratch = Vec::new();
    eval_provider_forces(
        &state.nodes,
        model,
        env,
        providers,
        &mut seg_forces,
        &mut node_forces,
        &mut scratch,
    );
    let mut out = DVector::zeros(model.unknown_count());
    residuals_into(
        &state.nodes,
        &state.tensions,
        model,
        &seg_forces,
        &node_forces,
        &mut out,
    )?;
    Ok(out)
}

/// Newton problem over [s_1, q_1, …, s_N] with fixed endpoint nodes.
///
/// With `squared_tensions` the tension unknowns enter as T = s², which
/// enforces nonnegativity but has a zero-gradient dead zone at s = 0.
/// The primary solve therefore runs with free-sign tensions (T = s), and
/// the squared form is a second pass reserved for boundaries that demand
/// compression somewhere.
struct EquilibriumProblem<'a> {
    model: &'a LumpedModel,
    env: &'a Environment,
    providers: &'a [Box<dyn ForceProvider>],
    start: Vec2,
    end: Vec2,
    squared_tensions: bool,
    work: RefCell<ProblemWorkspace>,
}

struct ProblemWorkspace {
    nodes: Vec<Vec2>,
    tensions: Vec<f64>,
    seg_forces: Vec<Vec2>,
    node_forces: Vec<Vec2>,
    scratch: Vec<Vec2>,
}

impl<'a> EquilibriumProblem<'a> {
    fn new(
        model: &'a LumpedModel,
        env: &'a Environment,
        providers: &'a [Box<dyn ForceProvider>],
        start: Vec2,
        end: Vec2,
        squared_tensions: bool,
    ) -> Self {
        let n = model.n_segments;
        Self {
            model,
            env,
            providers,
            start,
            end,
            squared_tensions,
            work: RefCell::new(ProblemWorkspace {
                nodes: vec![Vec2::zeros(); n + 1],
                tensions: vec![0.0; n],
                seg_forces: vec![Vec2::zeros(); n],
                node_forces: vec![Vec2::zeros(); n + 1],
                scratch: Vec::new(),
            }),
        }
    }

    fn decode(&self, z: &DVector<f64>, nodes: &mut [Vec2], tensions: &mut [f64]) {
        let n = self.model.n_segments;
        nodes[0] = self.start;
        nodes[n] = self.end;
        for i in 1..n {
            nodes[i] = Vec2::new(z[3 * (i - 1) + 1], z[3 * (i - 1) + 2]);
        }
        for j in 1..=n {
            let s = z[3 * (j - 1)];
            tensions[j - 1] = if self.squared_tensions { s * s } else { s };
        }
    }
}

impl RootProblem for EquilibriumProblem<'_> {
    fn dim(&self) -> usize {
        self.model.unknown_count()
    }

    fn bandwidth(&self) -> Option<(usize, usize)> {
        Some((4, 4))
    }

    /// Cap only node-position motion; tension entries are linear (free
    /// form) or benign, and legitimately jump by tens of newtons.
    fn step_norm(&self, step: &DVector<f64>) -> f64 {
        let mut max = 0.0_f64;
        for k in 0..step.len() {
            if k % 3 != 0 {
                max = max.max(step[k].abs());
            }
        }
        max
    }

    fn residual(&self, z: &DVector<f64>, residual: &mut DVector<f64>) {
        let work = &mut *self.work.borrow_mut();
        self.decode(z, &mut work.nodes, &mut work.tensions);
        eval_provider_forces(
            &work.nodes,
            self.model,
            self.env,
            self.providers,
            &mut work.seg_forces,
            &mut work.node_forces,
            &mut work.scratch,
        );
        if residuals_into(
            &work.nodes,
            &work.tensions,
            self.model,
            &work.seg_forces,
            &work.node_forces,
            residual,
        )
        .is_err()
        {
            // degenerate geometry along the line search: out of domain
            residual.fill(f64::INFINITY);
        }
    }

    fn jacobian(&self, z: &DVector<f64>, jac: &mut DMatrix<f64>) {
        let work = &mut *self.work.borrow_mut();
        self.decode(z, &mut work.nodes, &mut work.tensions);
        let n = self.model.n_segments;
        let nodes = &work.nodes;
        let col_s = |j: usize| 3 * (j - 1);
        let col_q = |i: usize| (3 * (i - 1) + 1, 3 * (i - 1) + 2);

        let mut unit = vec![Vec2::zeros(); n];
        let mut inv_len = vec![0.0; n];
        for j in 1..=n {
            let d = nodes[j] - nodes[j - 1];
            let len = d.norm();
            unit[j - 1] = d / len;
            inv_len[j - 1] = 1.0 / len;
        }

        // length rows: ∂(|q_j − q_{j−1}| − ℓ)/∂q = ±eᵀ
        for j in 1..=n {
            let row = segment_residual_index(j);
            let e = unit[j - 1];
            if j <= n - 1 {
                let (cx, cy) = col_q(j);
                jac[(row, cx)] = e.x;
                jac[(row, cy)] = e.y;
            }
            if j >= 2 {
                let (cx, cy) = col_q(j - 1);
                jac[(row, cx)] = -e.x;
                jac[(row, cy)] = -e.y;
            }
        }

        fn add2(
            jac: &mut DMatrix<f64>,
            rows: (usize, usize),
            cols: (usize, usize),
            m: Matrix2<f64>,
        ) {
            jac[(rows.0, cols.0)] += m[(0, 0)];
            jac[(rows.0, cols.1)] += m[(0, 1)];
            jac[(rows.1, cols.0)] += m[(1, 0)];
            jac[(rows.1, cols.1)] += m[(1, 1)];
        }
        for i in 1..n {
            let rows = node_residual_index(i);
            let (t_lo, t_hi) = (work.tensions[i - 1], work.tensions[i]);
            let (e_lo, e_hi) = (unit[i - 1], unit[i]);
            let (s_lo, s_hi) = (z[col_s(i)], z[col_s(i + 1)]);

            // tension magnitudes: dT/ds = 2s (squared form) or 1 (free form)
            let (g_lo, g_hi) = if self.squared_tensions {
                (2.0 * s_lo, 2.0 * s_hi)
            } else {
                (1.0, 1.0)
            };
            jac[(rows.0, col_s(i))] += -g_lo * e_lo.x;
            jac[(rows.1, col_s(i))] += -g_lo * e_lo.y;
            jac[(rows.0, col_s(i + 1))] += g_hi * e_hi.x;
            jac[(rows.1, col_s(i + 1))] += g_hi * e_hi.y;

            // tension directions: ∂e/∂d = (I − eeᵀ)/|d|
            let m_lo = (Matrix2::identity() - e_lo * e_lo.transpose()) * (t_lo * inv_len[i - 1]);
            let m_hi = (Matrix2::identity() - e_hi * e_hi.transpose()) * (t_hi * inv_len[i]);
            add2(jac, rows, col_q(i), -m_lo - m_hi);
            if i >= 2 {
                add2(jac, rows, col_q(i - 1), m_lo);
            }
            if i + 1 <= n - 1 {
                add2(jac, rows, col_q(i + 1), m_hi);
            }

            for provider in self.providers {
                match provider.kind() {
                    ForceKind::Segment => {
                        // segments i (nodes i−1, i) and i+1 (nodes i, i+1),
                        // half of each
                        let (d_a, d_b) =
                            provider.segment_force_jacobian(nodes, i, self.model, self.env);
                        if i >= 2 {
                            add2(jac, rows, col_q(i - 1), 0.5 * d_a);
                        }
                        add2(jac, rows, col_q(i), 0.5 * d_b);
                        let (d_a, d_b) =
                            provider.segment_force_jacobian(nodes, i + 1, self.model, self.env);
                        add2(jac, rows, col_q(i), 0.5 * d_a);
                        if i + 1 <= n - 1 {
                            add2(jac, rows, col_q(i + 1), 0.5 * d_b);
                        }
                    }
                    ForceKind::Node => {
                        let d = provider.node_force_jacobian(nodes, i, self.model, self.env);
                        add2(jac, rows, col_q(i), d);
                    }
                }
            }
        }
    }
}

/// Newton controls for the equilibrium solve.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumOptions {
    /// Residual infinity-norm tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Consecutive non-improving iterations before giving up.
    pub early_abort_growth_steps: usize,
    /// Newton step cap as a fraction of cable length. Far-from-solution
    /// iterations (straight-line init) fold the chain into kinked local
    /// minima when allowed to jump; capped steps keep the evolution smooth.
    pub max_step_fraction: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 400,
            early_abort_growth_steps: 8,
            max_step_fraction: 1.0 / 16.0,
        }
    }
}

/// Converged equilibrium: the raw discrete state plus the sampled solution.
#[derive(Debug, Clone)]
pub struct EquilibriumSolve {
    pub state: LumpedState,
    pub solution: TetherSolution,
}

/// Reusable solver instance: model, force providers, and options.
///
/// One instance solves one problem at a time; independent instances may run
/// concurrently. Warm-start chains are inherently sequential.
pub struct EquilibriumSolver {
    model: LumpedModel,
    providers: Vec<Box<dyn ForceProvider>>,
    options: EquilibriumOptions,
}

impl EquilibriumSolver {
    /// Solver with the default provider set (per-segment drag).
    pub fn new(model: LumpedModel) -> Self {
        Self {
            model,
            providers: vec![Box::new(DragProvider)],
            options: EquilibriumOptions::default(),
        }
    }

    pub fn with_providers(model: LumpedModel, providers: Vec<Box<dyn ForceProvider>>) -> Self {
        Self {
            model,
            providers,
            options: EquilibriumOptions::default(),
        }
    }

    pub fn add_provider(mut self, provider: Box<dyn ForceProvider>) -> Self {
        self.providers.push(provider);
        self
    }

    pub fn with_options(mut self, options: EquilibriumOptions) -> Self {
        self.options = options;
        self
    }

    pub fn model(&self) -> &LumpedModel {
        &self.model
    }

    pub fn providers(&self) -> &[Box<dyn ForceProvider>] {
        &self.providers
    }

    /// Solves for equilibrium from the given initial state.
    ///
    /// `strategy` labels the initialization in the diagnostics
    /// ("analytical-init", "warm-start", "straight-line", …).
    pub fn solve(
        &self,
        bc: &PlanarBoundary,
        env: &Environment,
        init: &LumpedState,
        strategy: &str,
    ) -> Result<EquilibriumSolve, LumpedError> {
        let started = Instant::now();
        bc.check_reachable(self.model.spec.length)?;
        init.check_dims(&self.model)?;

        let n = self.model.n_segments;
        let root_options = RootOptions {
            tol: self.options.tol,
            max_iters: self.options.max_iters,
            early_abort_growth_steps: self.options.early_abort_growth_steps,
            max_step: Some(self.options.max_step_fraction * self.model.spec.length),
            ..RootOptions::default()
        };

        let run = |problem: &EquilibriumProblem, z0: &DVector<f64>| {
            solve_root(problem, z0, &root_options).map(|solve| {
                let mut nodes = vec![Vec2::zeros(); n + 1];
                let mut tensions = vec![0.0; n];
                problem.decode(&solve.state, &mut nodes, &mut tensions);
                (solve, LumpedState::new(nodes, tensions))
            })
        };

        // Primary pass: free-sign tensions. For any boundary whose true
        // equilibrium is all-tensile (everything the fallback rule lets
        // through), its root is the answer.
        let free_problem = EquilibriumProblem::new(
            &self.model,
            env,
            &self.providers,
            bc.start,
            bc.end,
            false,
        );
        let mut z0 = DVector::zeros(self.model.unknown_count());
        for j in 1..=n {
            z0[3 * (j - 1)] = init.tensions[j - 1];
        }
        for i in 1..n {
            z0[3 * (i - 1) + 1] = init.nodes[i].x;
            z0[3 * (i - 1) + 2] = init.nodes[i].y;
        }

        let accept = |pair: (crate::newton::RootSolve, LumpedState)| {
            let (solve, mut state) = pair;
            if state.tensions.iter().all(|&t| t >= -1e-12) {
                for t in &mut state.tensions {
                    *t = t.max(0.0);
                }
                Ok((solve, state))
            } else {
                // compression demanded somewhere: redo with T = s²
                Err(Some(state))
            }
        };
        // Far-from-solution inits can stall in kinked local minima where
        // zero tensions blank out the Jacobian. Two rescue rungs: re-seed
        // from a sagging parabola, then the slack continuation that walks in
        // from the nearly-taut problem.
        let first_pass = run(&free_problem, &z0)
            .or_else(|_| {
                let seed = parabolic_chain_init(bc, &self.model, self.model.spec.length);
                let mut z1 = DVector::zeros(self.model.unknown_count());
                for j in 1..=n {
                    z1[3 * (j - 1)] = seed.tensions[j - 1];
                }
                for i in 1..n {
                    z1[3 * (i - 1) + 1] = seed.nodes[i].x;
                    z1[3 * (i - 1) + 2] = seed.nodes[i].y;
                }
                run(&free_problem, &z1)
            })
            .or_else(|_| self.slack_continuation(bc, env, &root_options))
            .map_or(Err(None), accept);

        let (solve, state) = match first_pass {
            Ok(result) => result,
            Err(seed) => {
                let squared_problem = EquilibriumProblem::new(
                    &self.model,
                    env,
                    &self.providers,
                    bc.start,
                    bc.end,
                    true,
                );
                // an exactly zero s would zero out its Jacobian column
                let s_floor = (1e-9 * self.model.spec.total_weight()).sqrt();
                let (seed_tensions, seed_nodes) = match &seed {
                    Some(state) => (&state.tensions, &state.nodes),
                    None => (&init.tensions, &init.nodes),
                };
                let mut z0 = DVector::zeros(self.model.unknown_count());
                for j in 1..=n {
                    z0[3 * (j - 1)] = seed_tensions[j - 1].max(0.0).sqrt().max(s_floor);
                }
                for i in 1..n {
                    z0[3 * (i - 1) + 1] = seed_nodes[i].x;
                    z0[3 * (i - 1) + 2] = seed_nodes[i].y;
                }
                run(&squared_problem, &z0).map_err(|err| {
                    let (iterations, residual_norm) = match &err {
                        RootError::SingularJacobian { iteration, .. } => (*iteration, f64::NAN),
                        RootError::MaxIterations {
                            iterations,
                            residual_norm,
                            ..
                        }
                        | RootError::Diverged {
                            iterations,
                            residual_norm,
                            ..
                        } => (*iterations, *residual_norm),
                    };
                    let min_tension = (0..n)
                        .map(|j| {
                            let s = err.state()[3 * j];
                            s * s
                        })
                        .fold(f64::INFINITY, f64::min);
                    if residual_norm.is_finite() && min_tension < 1e-6 {
                        return LumpedError::NonPhysical {
                            min_tension,
                            residual_norm,
                        };
                    }
                    match err {
                        RootError::SingularJacobian { .. } => {
                            LumpedError::SingularJacobian { iterations }
                        }
                        RootError::MaxIterations { .. } => LumpedError::MaxIterations {
                            iterations,
                            residual_norm,
                        },
                        RootError::Diverged { .. } => LumpedError::Diverged {
                            iterations,
                            residual_norm,
                        },
                    }
                })?
            }
        };

        let diagnostics = SolveDiagnostics {
            iterations: solve.iterations,
            residual_norm: solve.residual_norm,
            solve_time: started.elapsed().as_secs_f64(),
            strategy: strategy.to_string(),
            drag_iterations: 0,
            guesses_tried: 0,
        };
        let solution = self.state_to_solution(&state, env, diagnostics);
        Ok(EquilibriumSolve { state, solution })
    }

    /// Homotopy rescue for bad initializations: solve a sequence of models
    /// whose rest length grows from just above the chord (where a barely
    /// sagging chain is the solution) up to the full cable, warm-starting
    /// each stage from the last. Hanging-cable equilibria keep strictly
    /// positive tensions along this path, which is what defeats the
    /// zero-tension fold traps.
    fn slack_continuation(
        &self,
        bc: &PlanarBoundary,
        env: &Environment,
        root_options: &RootOptions,
    ) -> Result<(crate::newton::RootSolve, LumpedState), RootError> {
        let n = self.model.n_segments;
        let spec = self.model.spec;
        let chord = bc.chord();
        let total_slack = (spec.length - chord).max(0.0);
        let stages = 8;
        let stage_options = RootOptions {
            max_iters: 60,
            ..*root_options
        };

        let mut z = DVector::zeros(self.model.unknown_count());
        let mut last = None;
        for k in 1..=stages {
            // quadratic schedule: sag grows like √slack, so early stages
            // stay close together where the problem is stiffest
            let fraction = (k as f64 / stages as f64).powi(2);
            let length_k = if k == stages {
                spec.length
            } else {
                chord + 1e-4 * spec.length + total_slack * fraction
            };
            let stage_model = LumpedModel {
                spec,
                n_segments: n,
                segment_length: length_k / n as f64,
            };
            if k == 1 {
                let seed = parabolic_chain_init(bc, &stage_model, length_k);
                for j in 1..=n {
                    z[3 * (j - 1)] = seed.tensions[j - 1];
                }
                for i in 1..n {
                    z[3 * (i - 1) + 1] = seed.nodes[i].x;
                    z[3 * (i - 1) + 2] = seed.nodes[i].y;
                }
            }
            let problem = EquilibriumProblem::new(
                &stage_model,
                env,
                &self.providers,
                bc.start,
                bc.end,
                false,
            );
            let options = if k == stages {
                root_options
            } else {
                &stage_options
            };
            let solve = solve_root(&problem, &z, options)?;
            z.copy_from(&solve.state);
            if k == stages {
                let mut nodes = vec![Vec2::zeros(); n + 1];
                let mut tensions = vec![0.0; n];
                problem.decode(&solve.state, &mut nodes, &mut tensions);
                last = Some((solve, LumpedState::new(nodes, tensions)));
            }
        }
        Ok(last.expect("final continuation stage always runs"))
    }

    /// Attachment forces and node tensions for a converged state.
    fn state_to_solution(
        &self,
        state: &LumpedState,
        env: &Environment,
        diagnostics: SolveDiagnostics,
    ) -> TetherSolution {
        let model = &self.model;
        let n = model.n_segments;
        let rest = model.segment_length;
        let g = model.spec.gravity;

        let mut seg_forces = vec![Vec2::zeros(); n];
        let mut node_forces = vec![Vec2::zeros(); n + 1];
        let mut scratch = Vec::new();
        eval_provider_forces(
            &state.nodes,
            model,
            env,
            &self.providers,
            &mut seg_forces,
            &mut node_forces,
            &mut scratch,
        );

        let unit = |j: usize| (state.nodes[j] - state.nodes[j - 1]).normalize();
        // The attachment holds its node in place; everything else acting
        // there (end-segment tension, the node's half-segment gravity and
        // drag share, node forces) is what the tether hands through.
        let start_force = state.tensions[0] * unit(1)
            + Vec2::new(0.0, -model.node_mass(0) * g)
            + 0.5 * seg_forces[0]
            + node_forces[0];
        let end_force = -state.tensions[n - 1] * unit(n)
            + Vec2::new(0.0, -model.node_mass(n) * g)
            + 0.5 * seg_forces[n - 1]
            + node_forces[n];

        let samples = (0..=n)
            .map(|i| {
                let tension = if i == 0 {
                    start_force.norm()
                } else if i == n {
                    end_force.norm()
                } else {
                    0.5 * (state.tensions[i - 1] + state.tensions[i])
                };
                TensionSample {
                    arc_position: rest * i as f64,
                    point: state.nodes[i],
                    tension,
                }
            })
            .collect();

        TetherSolution {
            samples,
            start_force,
            end_force,
            method: SolveMethod::Numerical,
            diagnostics,
        }
    }

    /// Residual of the global force balance: attachment forces minus all
    /// applied forces (weight, drag, node forces). Zero for a converged
    /// quasi-static solution.
    pub fn balance_closure(&self, solve: &EquilibriumSolve, env: &Environment) -> Vec2 {
        let model = &self.model;
        let n = model.n_segments;
        let mut seg_forces = vec![Vec2::zeros(); n];
        let mut node_forces = vec![Vec2::zeros(); n + 1];
        let mut scratch = Vec::new();
        eval_provider_forces(
            &solve.state.nodes,
            model,
            env,
            &self.providers,
            &mut seg_forces,
            &mut node_forces,
            &mut scratch,
        );
        let mut applied = Vec2::new(0.0, -model.spec.total_weight());
        for f in &seg_forces {
            applied += *f;
        }
        for f in &node_forces {
            applied += *f;
        }
        solve.solution.start_force + solve.solution.end_force - applied
    }
}

/// Closed-form chain seed on a parabola sagging below the chord, nodes at
/// (approximately) equal arc spacing. Exists because an exactly collinear
/// chain is a structurally singular Newton state: perpendicular escape from
/// the chord is invisible to the linearized length constraints.
fn parabolic_chain_init(bc: &PlanarBoundary, model: &LumpedModel, length: f64) -> LumpedState {
    let n = model.n_segments;
    let chord = bc.chord();
    let w = model.spec.weight_per_length();
    let slack = (length - chord).max(1e-6 * length);
    // parabolic cable-length relation, sag perpendicular to the chord
    let sag = (0.375 * chord * slack).sqrt();
    let tangent = bc.span() / chord;
    let mut normal = Vec2::new(tangent.y, -tangent.x);
    if normal.y > 0.0 {
        normal = -normal;
    }

    // fine polyline along the parabola, then equal-arc resampling
    let fine = 16 * n;
    let mut points = Vec::with_capacity(fine + 1);
    let mut cumulative = Vec::with_capacity(fine + 1);
    let mut total = 0.0;
    for k in 0..=fine {
        let xi = k as f64 / fine as f64;
        let p = bc.start + xi * bc.span() + 4.0 * sag * xi * (1.0 - xi) * normal;
        if let Some(&prev) = points.last() {
            let prev: Vec2 = prev;
            total += (p - prev).norm();
        }
        points.push(p);
        cumulative.push(total);
    }
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(bc.start);
    let mut cursor = 0usize;
    for i in 1..n {
        let target = total * i as f64 / n as f64;
        while cursor + 1 < cumulative.len() && cumulative[cursor + 1] < target {
            cursor += 1;
        }
        let span = cumulative[cursor + 1] - cumulative[cursor];
        let t = if span > 0.0 {
            (target - cumulative[cursor]) / span
        } else {
            0.0
        };
        nodes.push(points[cursor] + t * (points[cursor + 1] - points[cursor]));
    }
    nodes.push(bc.end);

    // horizontal-tension scale of that parabola
    let tension = w * chord * chord / (8.0 * sag);
    LumpedState::new(nodes, vec![tension; n])
}

/// Nodes from equal-arc samples of an analytical solution, tensions from
/// the segment midpoints.
pub fn init_from_analytical(analytical: &CatenarySolution, model: &LumpedModel) -> LumpedState {
    let n = model.n_segments;
    let nodes = analytical.equal_arc_points(n + 1);
    let tensions = (1..=n)
        .map(|j| analytical.tension_at_arc((j as f64 - 0.5) * model.segment_length))
        .collect();
    LumpedState::new(nodes, tensions)
}

/// Previous state carried over, endpoints moved to the new boundary.
pub fn warm_start(
    previous: &LumpedState,
    bc: &PlanarBoundary,
    model: &LumpedModel,
) -> Result<LumpedState, LumpedError> {
    previous.check_dims(model)?;
    let mut state = previous.clone();
    state.nodes[0] = bc.start;
    let last = state.nodes.len() - 1;
    state.nodes[last] = bc.end;
    Ok(state)
}

/// Nodes equally spaced on the straight line between the attachments, with
/// a uniform rough tension guess of one cable weight.
pub fn straight_line_init(bc: &PlanarBoundary, model: &LumpedModel) -> LumpedState {
    let n = model.n_segments;
    let nodes = (0..=n)
        .map(|k| bc.start + (k as f64 / n as f64) * (bc.end - bc.start))
        .collect();
    let tensions = vec![model.spec.total_weight(); n];
    LumpedState::new(nodes, tensions)
}

/// Discretization bend-radius rule: true when the horizontal distance in
/// the drag-rotated frame is under two segment lengths, where the rigid
/// segments would kink instead of bending. Callers should then use the
/// analytical method (`SolveMethod::AnalyticalFallback`).
pub fn should_fallback(
    bc: &PlanarBoundary,
    spec: &TetherSpec,
    env: &Environment,
    n_segments: usize,
) -> bool {
    let wind_bc = PlanarBoundary::new(bc.start, bc.end, env.airspeed);
    let theta = catenary::drag_rotation_estimate(&wind_bc, spec);
    let span = bc.end - bc.start;
    let rotated_dx = theta.cos() * span.x + theta.sin() * span.y;
    rotated_dx.abs() < 2.0 * spec.length / n_segments as f64
}
