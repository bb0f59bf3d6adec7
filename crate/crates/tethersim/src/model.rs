//! Shared domain types and the drag law used by both solvers.
//!
//! Units are SI throughout, angles in radians. The solution plane is a
//! vertical plane with `x` horizontal and `y` pointing up, so gravity acts
//! in `-y` and wind blows along `+x` for positive airspeed.

use nalgebra::Vector2;
use thiserror::Error;

/// 2D vector in the solution plane (x horizontal, y up), meters or newtons.
pub type Vec2 = Vector2<f64>;

/// Standard gravity [m/s²].
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Sea-level air density [kg/m³].
pub const SEA_LEVEL_AIR_DENSITY: f64 = 1.225;

/// Errors from constructing or validating domain data.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A physical parameter violates its bound.
    #[error("invalid tether spec: {field} must be {requirement}, got {value}")]
    InvalidSpec {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    /// The endpoints are farther apart than the cable is long.
    #[error("unreachable: straight-line distance exceeds tether length ({distance:.6} m > {length:.6} m)")]
    Unreachable { distance: f64, length: f64 },
}

/// Physical cable properties plus the air it moves through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetherSpec {
    /// Unstretched cable length [m].
    pub length: f64,
    /// Mass per unit length [kg/m].
    pub linear_mass: f64,
    /// Cable diameter [m].
    pub diameter: f64,
    /// Drag coefficient for cross-flow over a cylinder (dimensionless).
    pub drag_coefficient: f64,
    /// Air density [kg/m³].
    pub air_density: f64,
    /// Gravitational acceleration [m/s²].
    pub gravity: f64,
}

impl TetherSpec {
    /// Spec with default air density (1.225) and gravity (9.81).
    pub fn new(
        length: f64,
        linear_mass: f64,
        diameter: f64,
        drag_coefficient: f64,
    ) -> Result<Self, ModelError> {
        Self {
            length,
            linear_mass,
            diameter,
            drag_coefficient,
            air_density: SEA_LEVEL_AIR_DENSITY,
            gravity: STANDARD_GRAVITY,
        }
        .validated()
    }

    /// Spec for a cable given by total mass instead of linear density.
    pub fn from_total_mass(
        length: f64,
        total_mass: f64,
        diameter: f64,
        drag_coefficient: f64,
    ) -> Result<Self, ModelError> {
        if !(length > 0.0) {
            return Err(ModelError::InvalidSpec {
                field: "length",
                requirement: "> 0",
                value: length,
            });
        }
        Self::new(length, total_mass / length, diameter, drag_coefficient)
    }

    /// Validates all invariants, returning `self` on success.
    pub fn validated(self) -> Result<Self, ModelError> {
        let positive: [(&'static str, f64); 5] = [
            ("length", self.length),
            ("linear_mass", self.linear_mass),
            ("diameter", self.diameter),
            ("air_density", self.air_density),
            ("gravity", self.gravity),
        ];
        for (field, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::InvalidSpec {
                    field,
                    requirement: "> 0 and finite",
                    value,
                });
            }
        }
        if !(self.drag_coefficient >= 0.0) || !self.drag_coefficient.is_finite() {
            return Err(ModelError::InvalidSpec {
                field: "drag_coefficient",
                requirement: ">= 0 and finite",
                value: self.drag_coefficient,
            });
        }
        Ok(self)
    }

    /// Weight per unit length w = μ·g [N/m].
    pub fn weight_per_length(&self) -> f64 {
        self.linear_mass * self.gravity
    }

    /// Total cable weight [N].
    pub fn total_weight(&self) -> f64 {
        self.weight_per_length() * self.length
    }
}

/// Endpoint positions and in-plane airspeed for one solve.
///
/// `start` is the ground-vehicle attachment, `end` the drone attachment.
/// `airspeed` is the signed horizontal airflow component along the plane's
/// `+x` axis; the flight pipeline orients the plane so the drone sits at
/// x ≥ 0, making positive airspeed blow from the ground vehicle toward the
/// drone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarBoundary {
    /// Ground-vehicle attachment point [m].
    pub start: Vec2,
    /// Drone attachment point [m].
    pub end: Vec2,
    /// Signed horizontal airspeed along +x [m/s].
    pub airspeed: f64,
}

impl PlanarBoundary {
    pub fn new(start: Vec2, end: Vec2, airspeed: f64) -> Self {
        Self {
            start,
            end,
            airspeed,
        }
    }

    /// Vector from start to end.
    pub fn span(&self) -> Vec2 {
        self.end - self.start
    }

    /// Straight-line distance between the endpoints [m].
    pub fn chord(&self) -> f64 {
        self.span().norm()
    }

    /// Rejects geometries the cable cannot span.
    pub fn check_reachable(&self, length: f64) -> Result<(), ModelError> {
        let distance = self.chord();
        if distance > length {
            return Err(ModelError::Unreachable { distance, length });
        }
        Ok(())
    }
}

/// Which solver produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Analytical,
    Numerical,
    /// Analytical result substituted where the discretization cannot bend.
    AnalyticalFallback,
}

impl SolveMethod {
    pub fn label(&self) -> &'static str {
        match self {
            SolveMethod::Analytical => "analytical",
            SolveMethod::Numerical => "numerical",
            SolveMethod::AnalyticalFallback => "analytical-fallback",
        }
    }
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Convergence bookkeeping for one solve.
#[derive(Debug, Clone, Default)]
pub struct SolveDiagnostics {
    /// Root-finder iterations of the successful attempt.
    pub iterations: usize,
    /// Final residual infinity norm.
    pub residual_norm: f64,
    /// Wall-clock solve time [s].
    pub solve_time: f64,
    /// Initial-guess label (analytical) or init-strategy label (numerical).
    pub strategy: String,
    /// Fixed-point iterations of the drag loop (analytical with wind).
    pub drag_iterations: usize,
    /// Number of initial guesses attempted before success (analytical).
    pub guesses_tried: usize,
}

/// One sampled point along the tether.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensionSample {
    /// Arc position measured from the start attachment [m].
    pub arc_position: f64,
    /// Position in the solution plane [m].
    pub point: Vec2,
    /// Tension magnitude [N].
    pub tension: f64,
}

/// Method-agnostic solver output.
///
/// `start_force` and `end_force` are the forces the tether exerts on its
/// attachments (what a load cell at that attachment measures), so for a
/// quasi-static tether `start_force + end_force` equals the sum of weight,
/// drag, and any other applied forces.
#[derive(Debug, Clone)]
pub struct TetherSolution {
    /// Samples ordered by arc position, first at `start`, last at `end`.
    pub samples: Vec<TensionSample>,
    /// Force the tether exerts on the ground attachment [N].
    pub start_force: Vec2,
    /// Force the tether exerts on the drone attachment [N].
    pub end_force: Vec2,
    pub method: SolveMethod,
    pub diagnostics: SolveDiagnostics,
}

impl TetherSolution {
    /// Tension at the ground attachment [N].
    pub fn start_tension(&self) -> f64 {
        self.start_force.norm()
    }

    /// Tension at the drone attachment [N].
    pub fn end_tension(&self) -> f64 {
        self.end_force.norm()
    }
}

/// Drag force magnitude from the Rayleigh drag equation, F = ½·ρ·C_D·A·V².
///
/// The caller resolves the direction; the returned magnitude is always ≥ 0.
pub fn rayleigh_drag(spec: &TetherSpec, exposed_area: f64, airspeed: f64) -> f64 {
    debug_assert!(exposed_area >= 0.0);
    0.5 * spec.air_density * spec.drag_coefficient * exposed_area * airspeed * airspeed
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper_spec() -> TetherSpec {
        // 32 m / 450 g aluminium cable, C_D = 1.2
        TetherSpec::from_total_mass(32.0, 0.450, 0.0026, 1.2).unwrap()
    }

    #[test]
    fn rayleigh_drag_hand_value() {
        let spec = TetherSpec {
            length: 1.0,
            linear_mass: 1.0,
            diameter: 0.01,
            drag_coefficient: 1.2,
            air_density: 1.225,
            gravity: 9.81,
        };
        assert_relative_eq!(rayleigh_drag(&spec, 0.09, 5.0), 1.65375, epsilon = 1e-12);
    }

    #[test]
    fn rayleigh_drag_zero_cases() {
        let spec = paper_spec();
        assert_eq!(rayleigh_drag(&spec, 0.09, 0.0), 0.0);
        assert_eq!(rayleigh_drag(&spec, 0.0, 7.0), 0.0);
    }

    #[test]
    fn rayleigh_drag_quadratic_in_speed_linear_in_area_and_cd() {
        let mut spec = paper_spec();
        for k in 1..20 {
            let v = 0.37 * k as f64 - 3.0;
            let a = 0.013 * k as f64;
            // doubling the speed scales by exactly 4 (power-of-two scaling)
            assert_eq!(
                rayleigh_drag(&spec, a, 2.0 * v),
                4.0 * rayleigh_drag(&spec, a, v)
            );
            assert_relative_eq!(
                rayleigh_drag(&spec, 3.0 * a, v),
                3.0 * rayleigh_drag(&spec, a, v),
                max_relative = 1e-15
            );
            let base = rayleigh_drag(&spec, a, v);
            spec.drag_coefficient *= 2.0;
            assert_eq!(rayleigh_drag(&spec, a, v), 2.0 * base);
            spec.drag_coefficient /= 2.0;
        }
    }

    #[test]
    fn weight_per_length_paper_cable() {
        let spec = paper_spec();
        assert_relative_eq!(spec.linear_mass, 0.0140625, epsilon = 1e-15);
        assert_relative_eq!(spec.weight_per_length(), 0.137953125, epsilon = 1e-12);
    }

    #[test]
    fn weight_per_length_round_numbers() {
        let mut spec = TetherSpec::new(10.0, 1.0, 0.01, 1.2).unwrap();
        assert_relative_eq!(spec.weight_per_length(), 9.81, epsilon = 1e-15);
        spec.linear_mass = 0.5;
        spec.gravity = 10.0;
        assert_relative_eq!(spec.weight_per_length(), 5.0, epsilon = 1e-15);
    }

    #[test]
    fn spec_validation_rejects_nonpositive_fields() {
        assert!(TetherSpec::new(0.0, 1.0, 0.01, 1.2).is_err());
        assert!(TetherSpec::new(10.0, -1.0, 0.01, 1.2).is_err());
        assert!(TetherSpec::new(10.0, 1.0, 0.0, 1.2).is_err());
        assert!(TetherSpec::new(10.0, 1.0, 0.01, -0.1).is_err());
        // zero drag coefficient is allowed (wind-insensitive cable)
        assert!(TetherSpec::new(10.0, 1.0, 0.01, 0.0).is_ok());
    }

    #[test]
    fn reachability_check() {
        let bc = PlanarBoundary::new(Vec2::new(0.0, 0.0), Vec2::new(3.0, 4.0), 0.0);
        assert!(bc.check_reachable(5.0).is_ok());
        assert!(matches!(
            bc.check_reachable(4.999),
            Err(ModelError::Unreachable { .. })
        ));
    }
}
