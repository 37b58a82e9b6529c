//! Feasible sets and their Euclidean projections.

use crate::error::{Error, Result};
use crate::linalg::{check_dims, Vector};

/// Bound used for coordinates that are unconstrained in the model.
///
/// Unbounded coordinates are stored as `[-DEFAULT_SENTINEL, DEFAULT_SENTINEL]`
/// so that projection stays a total, branch-free clamp.
pub const DEFAULT_SENTINEL: f64 = 1e12;

/// A closed convex set with an exact Euclidean projection.
///
/// Only boxes ship, but the optimizer, gap function and flow integrator are
/// written against this trait.
pub trait FeasibleSet {
    fn dim(&self) -> usize;

    /// Writes the projection of `x` into `out`. Both slices have `dim()` entries.
    fn project_into(&self, x: &[f64], out: &mut [f64]);

    /// Whether `x` lies in the set up to `tol` per coordinate.
    fn contains(&self, x: &[f64], tol: f64) -> bool;

    fn project(&self, x: &[f64]) -> Result<Vector> {
        check_dims("projection", x.len(), self.dim())?;
        let mut out = vec![0.0; x.len()];
        self.project_into(x, &mut out);
        Vector::new(out)
    }
}

/// Per-coordinate bounds `lower_i <= x_i <= upper_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraint {
    lower: Vector,
    upper: Vector,
}

impl BoxConstraint {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        check_dims("box bounds", lower.dim(), upper.dim())?;
        if let Some(i) = (0..lower.dim()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::usage(format!(
                "box bound {i} is empty: lower {} > upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(BoxConstraint { lower, upper })
    }

    /// The box `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("box dimension must be positive"));
        }
        BoxConstraint::new(Vector::new(vec![lo; dim])?, Vector::new(vec![hi; dim])?)
    }

    /// The box `[-half_width, half_width]^dim`.
    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::usage("box half-width must be positive"));
        }
        BoxConstraint::uniform(dim, -half_width, half_width)
    }

    /// The whole space, represented with sentinel bounds.
    pub fn unbounded(dim: usize) -> Self {
        BoxConstraint::symmetric(dim, DEFAULT_SENTINEL).expect("positive dim")
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }
}

impl FeasibleSet for BoxConstraint {
    fn dim(&self) -> usize {
        self.lower.dim()
    }

    fn project_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, (o, v)) in out.iter_mut().zip(x).enumerate() {
            *o = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lower[i] - tol && *v <= self.upper[i] + tol)
    }
}

/// Euclidean projection onto a box: `clamp(x_i, lower_i, upper_i)`.
pub fn project_box(x: &Vector, bx: &BoxConstraint) -> Result<Vector> {
    bx.project(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    /// Coordinate-wise minimiser of (y - x)^2 over [lo, hi] by a fine grid.
    fn grid_project_1d(x: f64, lo: f64, hi: f64) -> f64 {
        let steps = 100_000;
        (0..=steps)
            .map(|j| lo + (hi - lo) * j as f64 / steps as f64)
            .min_by(|a, b| (a - x).powi(2).total_cmp(&(b - x).powi(2)))
            .unwrap()
    }

    #[test]
    fn projection_examples() {
        let b1 = BoxConstraint::uniform(1, 0.0, 1.0).unwrap();
        assert_eq!(project_box(&v(&[0.5]), &b1).unwrap(), v(&[0.5]));

        let b2 = BoxConstraint::uniform(2, -1.0, 1.0).unwrap();
        assert_eq!(project_box(&v(&[2.0, -3.0]), &b2).unwrap(), v(&[1.0, -1.0]));

        let b3 = BoxConstraint::uniform(3, 0.0, 1.0).unwrap();
        let x = [0.3, 1.7, -0.2];
        let oracle: Vec<f64> = x.iter().map(|xi| grid_project_1d(*xi, 0.0, 1.0)).collect();
        let p = project_box(&v(&x), &b3).unwrap();
        for (a, b) in p.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-5);
        }
        assert_eq!(p, v(&[0.3, 1.0, 0.0]));
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let b = BoxConstraint::uniform(2, 0.0, 1.0).unwrap();
        assert!(matches!(
            project_box(&v(&[0.1]), &b),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(BoxConstraint::new(v(&[1.0]), v(&[0.0])).is_err());
        assert!(BoxConstraint::symmetric(2, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn idempotent_and_nonexpansive(
            pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -2.0..0.0f64, 0.0..2.0f64), 1..8)
        ) {
            let lower = v(&pairs.iter().map(|p| p.2).collect::<Vec<_>>());
            let upper = v(&pairs.iter().map(|p| p.3).collect::<Vec<_>>());
            let b = BoxConstraint::new(lower, upper).unwrap();
            let x = v(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
            let y = v(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
            let px = project_box(&x, &b).unwrap();
            prop_assert_eq!(&project_box(&px, &b).unwrap(), &px);
            let py = project_box(&y, &b).unwrap();
            prop_assert!(crate::linalg::dist(&px, &py) <= crate::linalg::dist(&x, &y) + 1e-12);
            prop_assert!(b.contains(&px, 0.0));
        }
    }
}
