//! Convex test problems with known solutions on a box `[-w, w]^n`.
//!
//! Both problems are built so that some bounds are active at the solution
//! and everything scales with the half-width `w`.

use crate::error::{Error, Result};
use crate::feasible::BoxConstraint;
use crate::linalg::{Matrix, Vector};
use crate::oracle::{L1Distance, Quadratic, Selection};

/// Unconstrained minimiser pattern, in units of the half-width. Coordinates
/// 0, 1 and 5 lie outside `[-1, 1]`.
const PATTERN: [f64; 10] = [1.8, -2.5, 0.4, -0.3, 0.6, 1.5, -0.1, 0.2, -0.7, 0.05];

fn pattern(dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|i| scale * PATTERN[i % PATTERN.len()]).collect()
}

/// A test problem: objective, feasible box, solution and starting point.
#[derive(Debug, Clone)]
pub struct TestProblem<S> {
    pub objective: S,
    pub set: BoxConstraint,
    pub solution: Vector,
    pub start: Vector,
}

impl<S: Selection> TestProblem<S> {
    pub fn optimal_value(&self) -> f64 {
        self.objective.value(&self.solution)
    }

    /// Coordinates where the solution sits on a bound.
    pub fn active_bounds(&self) -> usize {
        self.solution
            .iter()
            .zip(self.set.lower().iter().zip(self.set.upper().iter()))
            .filter(|(x, (lo, hi))| x == lo || x == hi)
            .count()
    }
}

fn check(dim: usize, half_width: f64) -> Result<()> {
    if dim == 0 {
        return Err(Error::usage("test problem dimension must be positive"));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::usage("box half-width must be positive"));
    }
    Ok(())
}

/// `½|Ax - b|²` with tridiagonal `A` (diagonal 1.5, off-diagonals 0.25, so
/// the spectrum lies in `[1, 2]`) and `b = A u` for the pattern `u` scaled by
/// the half-width.
pub fn quadratic(dim: usize, half_width: f64) -> Result<TestProblem<Quadratic>> {
    check(dim, half_width)?;
    let mut a = vec![0.0; dim * dim];
    for i in 0..dim {
        a[i * dim + i] = 1.5;
        if i + 1 < dim {
            a[i * dim + i + 1] = 0.25;
            a[(i + 1) * dim + i] = 0.25;
        }
    }
    let a = Matrix::new(dim, dim, a)?;
    let b = Vector::new(a.mul_vec(&pattern(dim, half_width)))?;
    let objective = Quadratic::new(a, b)?;
    let set = BoxConstraint::symmetric(dim, half_width)?;
    let solution = objective.solve(&set)?;
    Ok(TestProblem {
        objective,
        set,
        solution,
        start: Vector::zeros(dim),
    })
}

/// `|x - x*|_1` with `x*` the pattern scaled by the half-width; the solution
/// is the projection of `x*` onto the box.
pub fn l1(dim: usize, half_width: f64) -> Result<TestProblem<L1Distance>> {
    check(dim, half_width)?;
    let xstar = Vector::new(pattern(dim, half_width))?;
    let set = BoxConstraint::symmetric(dim, half_width)?;
    let objective = L1Distance::new(xstar);
    let solution = objective
        .exact_minimizer(&set)?
        .expect("l1 distance has a closed-form minimiser");
    Ok(TestProblem {
        objective,
        set,
        solution,
        start: Vector::zeros(dim),
    })
}
