//! Damped Newton root finding shared by both solver modules.
//!
//! Solves small square systems F(x) = 0 with analytic Jacobians, a
//! backtracking line search on ‖F‖², and an early-abort policy that gives
//! multi-guess callers a cheap way to discard bad initializations. Problems
//! with banded Jacobians (the lumped tether system) are eliminated within
//! their band.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// A square nonlinear system F(x) = 0.
pub trait RootProblem {
    /// Number of unknowns (= number of residuals).
    fn dim(&self) -> usize;

    /// Writes F(x) into `residual` (length `dim`).
    fn residual(&self, x: &DVector<f64>, residual: &mut DVector<f64>);

    /// Writes ∂F/∂x into `jac` (`dim` × `dim`, pre-zeroed by the caller).
    fn jacobian(&self, x: &DVector<f64>, jac: &mut DMatrix<f64>);

    /// Jacobian bandwidth `(lower, upper)`, or `None` for a dense solve.
    fn bandwidth(&self) -> Option<(usize, usize)> {
        None
    }

    /// Norm the step cap is measured against. Problems with mixed-unit
    /// unknowns can override this to cap only the entries where large jumps
    /// hurt.
    fn step_norm(&self, step: &DVector<f64>) -> f64 {
        inf_norm(step)
    }
}

/// Newton iteration controls.
#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Convergence threshold on ‖F‖∞.
    pub tol: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Abort after this many consecutive iterations without residual decrease.
    pub early_abort_growth_steps: usize,
    /// Line-search backtracking factor.
    pub backtrack_factor: f64,
    /// Smallest line-search step fraction before the step is taken anyway.
    pub min_step: f64,
    /// Cap on ‖step‖∞ before the line search; reins in the huge steps a
    /// near-singular Jacobian produces far from the solution.
    pub max_step: Option<f64>,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 50,
            early_abort_growth_steps: 3,
            backtrack_factor: 0.5,
            min_step: 1e-6,
            max_step: None,
        }
    }
}

/// Converged root plus iteration bookkeeping.
#[derive(Debug, Clone)]
pub struct RootSolve {
    pub state: DVector<f64>,
    pub iterations: usize,
    /// Final ‖F‖∞.
    pub residual_norm: f64,
}

#[derive(Debug, Error)]
pub enum RootError {
    #[error("jacobian is singular at iteration {iteration}")]
    SingularJacobian {
        iteration: usize,
        state: DVector<f64>,
    },
    #[error("no convergence after {iterations} iterations (residual {residual_norm:.3e})")]
    MaxIterations {
        iterations: usize,
        residual_norm: f64,
        state: DVector<f64>,
    },
    #[error("diverged after {iterations} iterations (residual {residual_norm:.3e})")]
    Diverged {
        iterations: usize,
        residual_norm: f64,
        state: DVector<f64>,
    },
}

impl RootError {
    /// Last iterate, for diagnostics.
    pub fn state(&self) -> &DVector<f64> {
        match self {
            RootError::SingularJacobian { state, .. }
            | RootError::MaxIterations { state, .. }
            | RootError::Diverged { state, .. } => state,
        }
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Damped Newton iteration on `problem` starting from `guess`.
pub fn solve_root(
    problem: &dyn RootProblem,
    guess: &DVector<f64>,
    options: &RootOptions,
) -> Result<RootSolve, RootError> {
    let n = problem.dim();
    assert_eq!(guess.len(), n, "guess dimension mismatch");

    let mut x = guess.clone();
    let mut r = DVector::zeros(n);
    let mut r_trial = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, n);
    let mut step = DVector::zeros(n);

    problem.residual(&x, &mut r);
    let mut norm_inf = inf_norm(&r);
    let mut norm_sq = if norm_inf.is_finite() {
        r.norm_squared()
    } else {
        f64::INFINITY
    };
    let mut growth_steps = 0usize;

    for iteration in 0..options.max_iters {
        if norm_inf <= options.tol {
            return Ok(RootSolve {
                state: x,
                iterations: iteration,
                residual_norm: norm_inf,
            });
        }
        if !norm_inf.is_finite() {
            return Err(RootError::Diverged {
                iterations: iteration,
                residual_norm: norm_inf,
                state: x,
            });
        }

        // Newton step: J·step = -F. A singular factorization is retried
        // with growing diagonal regularization (modified Newton) before
        // giving up.
        let mut solved = false;
        for regularization in [0.0, 1e-8, 1e-4, 1.0] {
            jac.fill(0.0);
            problem.jacobian(&x, &mut jac);
            if regularization > 0.0 {
                let scale = regularization * (1.0 + jac.amax());
                for k in 0..n {
                    jac[(k, k)] += scale;
                }
            }
            step.copy_from(&r);
            step.neg_mut();
            if solve_linear_in_place(&mut jac, &mut step, problem.bandwidth()) {
                solved = true;
                break;
            }
        }
        if !solved {
            return Err(RootError::SingularJacobian {
                iteration,
                state: x,
            });
        }
        if let Some(cap) = options.max_step {
            let magnitude = problem.step_norm(&step);
            if magnitude > cap {
                step *= cap / magnitude;
            }
        }

        // Backtracking line search on ‖F‖². A nonfinite trial residual means
        // the step left the problem domain, so backtracking continues past
        // `min_step` until the trial is finite again.
        let mut alpha = 1.0;
        let mut backtracks = 0usize;
        let (new_norm_sq, new_norm_inf) = loop {
            let trial = &x + alpha * &step;
            problem.residual(&trial, &mut r_trial);
            let trial_inf = inf_norm(&r_trial);
            let trial_sq = if trial_inf.is_finite() {
                r_trial.norm_squared()
            } else {
                f64::INFINITY
            };
            let accept = trial_sq < norm_sq
                || (trial_inf.is_finite() && alpha <= options.min_step)
                || backtracks >= 80;
            if accept {
                x = trial;
                std::mem::swap(&mut r, &mut r_trial);
                break (trial_sq, trial_inf);
            }
            alpha *= options.backtrack_factor;
            backtracks += 1;
        };

        if new_norm_sq >= norm_sq {
            growth_steps += 1;
            if growth_steps >= options.early_abort_growth_steps {
                return Err(RootError::Diverged {
                    iterations: iteration + 1,
                    residual_norm: new_norm_inf,
                    state: x,
                });
            }
        } else {
            growth_steps = 0;
        }
        norm_sq = new_norm_sq;
        norm_inf = new_norm_inf;
    }

    if norm_inf <= options.tol {
        return Ok(RootSolve {
            state: x,
            iterations: options.max_iters,
            residual_norm: norm_inf,
        });
    }
    Err(RootError::MaxIterations {
        iterations: options.max_iters,
        residual_norm: norm_inf,
        state: x,
    })
}

/// Gaussian elimination with partial pivoting, restricted to the band when
/// one is given. Fill-in from row swaps stays within `lower + upper`
/// superdiagonals, so banded problems never touch entries outside that range.
/// Returns false on a (numerically) singular pivot.
fn solve_linear_in_place(
    a: &mut DMatrix<f64>,
    b: &mut DVector<f64>,
    bandwidth: Option<(usize, usize)>,
) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let (lower, upper) = bandwidth.unwrap_or((n - 1, n - 1));
    let effective_upper = (lower + upper).min(n - 1);

    for k in 0..n {
        let row_end = (k + lower).min(n - 1);
        let mut pivot_row = k;
        let mut pivot_mag = a[(k, k)].abs();
        for i in (k + 1)..=row_end {
            let mag = a[(i, k)].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = i;
            }
        }
        if !(pivot_mag > 0.0) || !pivot_mag.is_finite() {
            return false;
        }
        let col_end = (k + effective_upper).min(n - 1);
        if pivot_row != k {
            for j in k..=col_end {
                a.swap((k, j), (pivot_row, j));
            }
            b.swap_rows(k, pivot_row);
        }
        let pivot = a[(k, k)];
        for i in (k + 1)..=row_end {
            let factor = a[(i, k)] / pivot;
            if factor != 0.0 {
                for j in (k + 1)..=col_end {
                    a[(i, j)] -= factor * a[(k, j)];
                }
                b[i] -= factor * b[k];
            }
            a[(i, k)] = 0.0;
        }
    }

    for k in (0..n).rev() {
        let col_end = (k + effective_upper).min(n - 1);
        let mut sum = b[k];
        for j in (k + 1)..=col_end {
            sum -= a[(k, j)] * b[j];
        }
        b[k] = sum / a[(k, k)];
    }
    true
}

/// Central-difference Jacobian, column by column. Test oracle for the
/// analytic Jacobians.
pub fn finite_difference_jacobian(
    problem: &dyn RootProblem,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    assert!(h > 0.0);
    let n = problem.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut plus = DVector::zeros(n);
    let mut minus = DVector::zeros(n);
    let mut xp = x.clone();
    for j in 0..n {
        let step = h * (1.0 + x[j].abs());
        xp[j] = x[j] + step;
        problem.residual(&xp, &mut plus);
        xp[j] = x[j] - step;
        problem.residual(&xp, &mut minus);
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Quadratic;

    impl RootProblem for Quadratic {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&self, x: &DVector<f64>, r: &mut DVector<f64>) {
            r[0] = x[0] * x[0] - 4.0;
        }
        fn jacobian(&self, x: &DVector<f64>, jac: &mut DMatrix<f64>) {
            jac[(0, 0)] = 2.0 * x[0];
        }
    }

    /// r = A·x - b with a known 3x3 matrix.
    struct Linear {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl RootProblem for Linear {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn residual(&self, x: &DVector<f64>, r: &mut DVector<f64>) {
            r.copy_from(&(&self.a * x - &self.b));
        }
        fn jacobian(&self, _x: &DVector<f64>, jac: &mut DMatrix<f64>) {
            jac.copy_from(&self.a);
        }
    }

    /// Jacobian with the wrong sign turns every Newton step into an ascent
    /// direction, so the line search can never improve and the abort policy
    /// has to fire — the same situation a bad initial guess produces.
    struct AscentDirection;

    impl RootProblem for AscentDirection {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&self, x: &DVector<f64>, r: &mut DVector<f64>) {
            r[0] = x[0] * x[0] - 4.0;
        }
        fn jacobian(&self, x: &DVector<f64>, jac: &mut DMatrix<f64>) {
            jac[(0, 0)] = -2.0 * x[0];
        }
    }

    #[test]
    fn scalar_quadratic_converges() {
        let guess = DVector::from_element(1, 3.0);
        let solve = solve_root(&Quadratic, &guess, &RootOptions::default()).unwrap();
        assert_relative_eq!(solve.state[0], 2.0, epsilon = 1e-8);
        assert!(solve.residual_norm <= 1e-8);
        assert!(solve.iterations <= 8);
    }

    #[test]
    fn deterministic_iterates() {
        let guess = DVector::from_element(1, 3.0);
        let a = solve_root(&Quadratic, &guess, &RootOptions::default()).unwrap();
        let b = solve_root(&Quadratic, &guess, &RootOptions::default()).unwrap();
        assert_eq!(a.state[0].to_bits(), b.state[0].to_bits());
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn linear_system_one_step() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let b = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let problem = Linear {
            a: a.clone(),
            b: b.clone(),
        };
        let solve = solve_root(&problem, &DVector::zeros(3), &RootOptions::default()).unwrap();
        let expected = a.lu().solve(&b).unwrap();
        for i in 0..3 {
            assert_relative_eq!(solve.state[i], expected[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn growth_steps_abort_early() {
        let guess = DVector::from_element(1, 3.0);
        let options = RootOptions::default();
        let err = solve_root(&AscentDirection, &guess, &options).unwrap_err();
        match err {
            RootError::Diverged { iterations, .. } => {
                assert_eq!(iterations, options.early_abort_growth_steps);
            }
            other => panic!("expected Diverged, got {other:?}"),
        }
    }

    #[test]
    fn singular_jacobian_reported() {
        struct Flat;
        impl RootProblem for Flat {
            fn dim(&self) -> usize {
                1
            }
            fn residual(&self, _x: &DVector<f64>, r: &mut DVector<f64>) {
                r[0] = 1.0;
            }
            fn jacobian(&self, _x: &DVector<f64>, _jac: &mut DMatrix<f64>) {}
        }
        let err = solve_root(&Flat, &DVector::zeros(1), &RootOptions::default()).unwrap_err();
        assert!(matches!(err, RootError::SingularJacobian { .. }));
    }

    #[test]
    fn finite_difference_recovers_linear_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -2.0, 1.0, 3.0, 1.0, 0.5, 1.0, 2.0]);
        let problem = Linear {
            a: a.clone(),
            b: DVector::zeros(3),
        };
        let x = DVector::from_row_slice(&[0.3, -0.7, 1.1]);
        let fd = finite_difference_jacobian(&problem, &x, 1e-6);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(fd[(i, j)], a[(i, j)], epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn banded_elimination_matches_dense() {
        // Pentadiagonal system solved via both paths.
        let n = 24;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 4.0 + (i as f64) * 0.1;
            if i + 1 < n {
                a[(i, i + 1)] = -1.0;
                a[(i + 1, i)] = -1.3;
            }
            if i + 2 < n {
                a[(i, i + 2)] = 0.4;
                a[(i + 2, i)] = 0.2;
            }
        }
        let b = DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin());

        let mut a_banded = a.clone();
        let mut x_banded = b.clone();
        assert!(solve_linear_in_place(
            &mut a_banded,
            &mut x_banded,
            Some((2, 2))
        ));

        let x_dense = a.lu().solve(&b).unwrap();
        for i in 0..n {
            assert_relative_eq!(x_banded[i], x_dense[i], epsilon = 1e-10);
        }
    }
}
