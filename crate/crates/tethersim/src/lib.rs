//! Real-time quasi-static tether shape and tension simulation for tethered
//! UAVs.
//!
//! Two complementary solvers share one output contract:
//!
//! - [`catenary`]: a closed-form catenary solver with multi-guess
//!   initialization and a rotated-frame uniform-drag extension. Solves in
//!   well under a millisecond.
//! - [`lumped`]: a lumped-mass / rigid-segment equilibrium solver with
//!   per-segment drag and extensible force providers, for cases where the
//!   uniform-drag assumption is too coarse.
//!
//! [`pipeline`] replays recorded flight logs through either solver and
//! compares them against measured tension; [`bench`] generates fixed-seed
//! scenario families and times the different initialization strategies.

pub mod bench;
pub mod catenary;
pub mod lumped;
pub mod model;
pub mod newton;
pub mod pipeline;

pub use model::{
    rayleigh_drag, ModelError, PlanarBoundary, SolveDiagnostics, SolveMethod, TensionSample,
    TetherSolution, TetherSpec, Vec2,
};
