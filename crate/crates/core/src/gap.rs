//! The gap function of the regularised linearisation and its minimiser.
//!
//! For a feasible `x` and a direction `z`,
//!
//! ```text
//! eta(x, z) = min_{y in X} <z, y - x> + (beta/2) |y - x|^2
//! ```
//!
//! The minimiser `ybar(x, z)` is the projection of `x - z/beta` onto `X`, so
//! `eta <= 0` with equality exactly when `-z` lies in the normal cone of `X`
//! at `x`.

use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::linalg::{check_dims, dot, Vector};

/// Tolerance on the feasibility of `x` accepted by the gap routines.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GapResult {
    pub ybar: Vector,
    /// Always `<= 0`.
    pub eta: f64,
    /// `|ybar - x|`
    pub residual: f64,
}

fn check_args<S: FeasibleSet + ?Sized>(x: &[f64], z: &[f64], beta: f64, set: &S) -> Result<()> {
    check_dims("gap direction", z.len(), x.len())?;
    check_dims("gap feasible set", set.dim(), x.len())?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::usage(format!("beta must be positive, got {beta}")));
    }
    if !set.contains(x, FEASIBILITY_TOL) {
        return Err(Error::usage("gap evaluated at an infeasible point"));
    }
    Ok(())
}

/// Writes `ybar(x, z)` into `out` without validating the arguments.
pub(crate) fn ybar_into<S: FeasibleSet + ?Sized>(
    x: &[f64],
    z: &[f64],
    beta: f64,
    set: &S,
    out: &mut [f64],
) {
    for ((o, xi), zi) in out.iter_mut().zip(x).zip(z) {
        *o = xi - zi / beta;
    }
    let shifted = out.to_vec();
    set.project_into(&shifted, out);
}

/// Gap value and residual for a known minimiser.
pub(crate) fn eta_at(x: &[f64], z: &[f64], beta: f64, ybar: &[f64]) -> (f64, f64) {
    let mut lin = 0.0;
    let mut sq = 0.0;
    for ((xi, zi), yi) in x.iter().zip(z).zip(ybar) {
        let d = yi - xi;
        lin += zi * d;
        sq += d * d;
    }
    // Rounding can push an exact zero slightly positive.
    ((lin + 0.5 * beta * sq).min(0.0), sq.sqrt())
}

/// Unchecked evaluation used inside the optimizer and the flow integrator.
pub(crate) fn eval_unchecked<S: FeasibleSet + ?Sized>(
    x: &[f64],
    z: &[f64],
    beta: f64,
    set: &S,
) -> GapResult {
    let mut y = vec![0.0; x.len()];
    ybar_into(x, z, beta, set, &mut y);
    let (eta, residual) = eta_at(x, z, beta, &y);
    GapResult {
        ybar: Vector::from_vec_unchecked(y),
        eta,
        residual,
    }
}

/// Minimiser of `<z, y - x> + (beta/2)|y - x|^2` over the feasible set.
pub fn ybar<S: FeasibleSet + ?Sized>(x: &[f64], z: &[f64], beta: f64, set: &S) -> Result<Vector> {
    Ok(eta(x, z, beta, set)?.ybar)
}

pub fn eta<S: FeasibleSet + ?Sized>(x: &[f64], z: &[f64], beta: f64, set: &S) -> Result<GapResult> {
    check_args(x, z, beta, set)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::usage("gap direction has non-finite entries"));
    }
    Ok(eval_unchecked(x, z, beta, set))
}

/// Whether `|ybar(x, g) - x| <= tol`, i.e. `-g` is approximately normal to the
/// set at `x`. Infeasible or mis-shaped input is never stationary.
pub fn stationarity_ok<S: FeasibleSet + ?Sized>(
    x: &[f64],
    g: &[f64],
    beta: f64,
    set: &S,
    tol: f64,
) -> bool {
    match eta(x, g, beta, set) {
        Ok(r) => r.residual <= tol,
        Err(_) => false,
    }
}

/// Left side of the optimality inequality `<z, ybar - x> + beta |ybar - x|^2 <= 0`.
pub fn optimality_slack(x: &[f64], z: &[f64], beta: f64, ybar: &[f64]) -> f64 {
    let d: Vec<f64> = ybar.iter().zip(x).map(|(y, xi)| y - xi).collect();
    dot(z, &d) + beta * dot(&d, &d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasible::BoxConstraint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force minimisation of the gap objective over a uniform grid of
    /// the box in dimension <= 3. Returns (argmin, min).
    pub(crate) fn grid_gap(
        x: &[f64],
        z: &[f64],
        beta: f64,
        lo: &[f64],
        hi: &[f64],
        per_axis: usize,
    ) -> (Vec<f64>, f64) {
        let d = x.len();
        let mut best = (vec![0.0; d], f64::INFINITY);
        let total = per_axis.pow(d as u32);
        let mut y = vec![0.0; d];
        for flat in 0..total {
            let mut r = flat;
            for i in 0..d {
                let j = r % per_axis;
                r /= per_axis;
                y[i] = lo[i] + (hi[i] - lo[i]) * j as f64 / (per_axis - 1) as f64;
            }
            let val: f64 = (0..d)
                .map(|i| z[i] * (y[i] - x[i]) + 0.5 * beta * (y[i] - x[i]).powi(2))
                .sum();
            if val < best.1 {
                best = (y.clone(), val);
            }
        }
        best
    }

    fn unit_box(lo: f64, hi: f64) -> BoxConstraint {
        BoxConstraint::uniform(1, lo, hi).unwrap()
    }

    #[test]
    fn ybar_examples() {
        assert_eq!(ybar(&[0.0], &[0.0], 3.0, &unit_box(-1.0, 1.0)).unwrap()[0], 0.0);

        let b = unit_box(0.0, 1.0);
        let y = ybar(&[0.5], &[1.0], 2.0, &b).unwrap();
        let (gy, _) = grid_gap(&[0.5], &[1.0], 2.0, &[0.0], &[1.0], 100_001);
        assert!((y[0] - gy[0]).abs() < 1e-5);
        assert_eq!(y[0], 0.0);

        let y = ybar(&[0.5], &[-4.0], 2.0, &b).unwrap();
        let (gy, _) = grid_gap(&[0.5], &[-4.0], 2.0, &[0.0], &[1.0], 100_001);
        assert!((y[0] - gy[0]).abs() < 1e-5);
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn eta_examples() {
        let b = unit_box(0.0, 1.0);
        let r = eta(&[0.3], &[0.0], 1.0, &b).unwrap();
        assert_eq!((r.eta, r.residual), (0.0, 0.0));

        let r = eta(&[0.5], &[1.0], 2.0, &b).unwrap();
        let (_, gmin) = grid_gap(&[0.5], &[1.0], 2.0, &[0.0], &[1.0], 100_001);
        assert!((r.eta - gmin).abs() < 1e-9);
        assert!((r.eta + 0.25).abs() < 1e-15);
        assert_eq!(r.residual, 0.5);
    }

    #[test]
    fn eta_matches_grid_in_low_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let d = rng.random_range(1..=3usize);
            let lo: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..0.0)).collect();
            let hi: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..2.0)).collect();
            let x: Vec<f64> = (0..d).map(|i| rng.random_range(lo[i]..hi[i])).collect();
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let beta = rng.random_range(0.5..4.0);
            let b = BoxConstraint::new(
                Vector::new(lo.clone()).unwrap(),
                Vector::new(hi.clone()).unwrap(),
            )
            .unwrap();
            let per_axis = [0, 20_001, 801, 161][d];
            let (_, gmin) = grid_gap(&x, &z, beta, &lo, &hi, per_axis);
            let r = eta(&x, &z, beta, &b).unwrap();
            // The grid can only be worse than the true minimum.
            assert!(r.eta <= gmin + 1e-12);
            assert!(gmin - r.eta < 1e-3, "grid {gmin} vs {}", r.eta);
        }
    }

    #[test]
    fn stationarity_examples() {
        let b = unit_box(-1.0, 1.0);
        assert!(stationarity_ok(&[0.0], &[0.0], 1.0, &b, 1e-12));
        assert!(stationarity_ok(&[1.0], &[-3.0], 1.0, &b, 1e-12));
        // Interior point, g = 1: residual is min(1/beta, distance to the bound).
        for beta in [0.5, 1.0, 4.0] {
            let expected = (1.0_f64 / beta).min(1.0);
            let r = eta(&[0.0], &[1.0], beta, &b).unwrap();
            assert!((r.residual - expected).abs() < 1e-15);
            assert!(!stationarity_ok(&[0.0], &[1.0], beta, &b, 0.5 * expected));
        }
    }

    #[test]
    fn infeasible_point_is_usage_error() {
        let b = unit_box(0.0, 1.0);
        assert!(matches!(eta(&[1.1], &[0.0], 1.0, &b), Err(Error::Usage(_))));
        assert!(eta(&[1.0 + 1e-10], &[0.0], 1.0, &b).is_ok());
        assert!(!stationarity_ok(&[2.0], &[0.0], 1.0, &b, 1.0));
        assert!(eta(&[0.5], &[0.0], -1.0, &b).is_err());
    }
}
