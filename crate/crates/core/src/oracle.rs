//! Stochastic subgradient oracles.
//!
//! An oracle observes `g = s + e + delta` at a query point, where `s` is a
//! selection from a generalized subdifferential of the objective, `e` is
//! i.i.d. zero-mean noise and `delta` is a vanishing bias. Deterministic
//! objectives implement [`Selection`]; anything that can be queried by the
//! optimizer implements [`Oracle`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::feasible::{BoxConstraint, FeasibleSet};
use crate::linalg::{check_dims, dist, norm, Matrix, Vector};

/// An objective paired with a single-valued subgradient selection.
pub trait Selection {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;

    /// Minimiser over `set`, when the objective has a computable one.
    fn exact_minimizer(&self, _set: &BoxConstraint) -> Result<Option<Vector>> {
        Ok(None)
    }
}

impl<S: Selection + ?Sized> Selection for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).subgradient(x)
    }
    fn exact_minimizer(&self, set: &BoxConstraint) -> Result<Option<Vector>> {
        (**self).exact_minimizer(set)
    }
}

impl<S: Selection + ?Sized> Selection for Box<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).subgradient(x)
    }
    fn exact_minimizer(&self, set: &BoxConstraint) -> Result<Option<Vector>> {
        (**self).exact_minimizer(set)
    }
}

/// One observation returned by an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientEstimate {
    pub g: Vector,
    /// Loss observed together with `g`; what this measures is up to the oracle.
    pub f_estimate: f64,
    /// The exact selection before noise. Populated only in introspection builds.
    pub true_part: Option<Vector>,
}

/// A source of stochastic subgradients.
///
/// Randomness is owned by the oracle; replaying the same construction and
/// query sequence reproduces the observations bit for bit.
pub trait Oracle {
    fn dim(&self) -> usize;

    fn query(&mut self, x: &[f64]) -> SubgradientEstimate;

    /// Minimiser over `set`, for test problems whose solution is known.
    fn exact_solution(&self, _set: &BoxConstraint) -> Result<Option<Vector>> {
        Ok(None)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn query(&mut self, x: &[f64]) -> SubgradientEstimate {
        (**self).query(x)
    }
    fn exact_solution(&self, set: &BoxConstraint) -> Result<Option<Vector>> {
        (**self).exact_solution(set)
    }
}

#[cfg(any(test, feature = "introspect"))]
fn introspect(v: &[f64]) -> Option<Vector> {
    Some(Vector::from_vec_unchecked(v.to_vec()))
}

#[cfg(not(any(test, feature = "introspect")))]
fn introspect(_: &[f64]) -> Option<Vector> {
    None
}

/// Noise-free oracle over a deterministic selection.
#[derive(Debug, Clone)]
pub struct Exact<S>(pub S);

impl<S: Selection> Oracle for Exact<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn query(&mut self, x: &[f64]) -> SubgradientEstimate {
        let g = self.0.subgradient(x);
        SubgradientEstimate {
            true_part: introspect(&g),
            g: Vector::from_vec_unchecked(g),
            f_estimate: self.0.value(x),
        }
    }

    fn exact_solution(&self, set: &BoxConstraint) -> Result<Option<Vector>> {
        self.0.exact_minimizer(set)
    }
}

/// `f(x) = ½|Ax - b|²`
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: Matrix,
    b: Vector,
}

impl Quadratic {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        check_dims("quadratic rows", a.rows(), b.dim())?;
        Ok(Quadratic { a, b })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    fn gram_spectrum(&self) -> (f64, f64) {
        let n = self.a.cols();
        let a = DMatrix::from_row_slice(self.a.rows(), n, self.a.as_slice());
        let gram = a.transpose() * &a;
        let eig = SymmetricEigen::new(gram);
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.max();
        (min, max)
    }

    /// Minimiser over `set` by projected gradient descent with step `1/L`,
    /// iterated until successive iterates agree to 1e-14.
    pub fn solve(&self, set: &BoxConstraint) -> Result<Vector> {
        check_dims("quadratic feasible set", set.dim(), self.a.cols())?;
        let (min, max) = self.gram_spectrum();
        if min <= 1e-12 * max.max(1.0) {
            return Err(Error::usage(
                "quadratic oracle matrix is rank deficient; the minimiser is not unique",
            ));
        }
        let step = 1.0 / max;
        let mut x = set.project(&vec![0.0; self.a.cols()])?.into_vec();
        let mut next = x.clone();
        for _ in 0..10_000_000 {
            let g = self.subgradient(&x);
            let shifted: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            set.project_into(&shifted, &mut next);
            let moved = dist(&x, &next);
            std::mem::swap(&mut x, &mut next);
            if moved <= 1e-14 * (1.0 + norm(&x)) {
                break;
            }
        }
        Vector::new(x)
    }
}

impl Selection for Quadratic {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r: Vec<f64> = self.a.mul_vec(x).iter().zip(self.b.iter()).map(|(u, v)| u - v).collect();
        0.5 * crate::linalg::dot(&r, &r)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self.a.mul_vec(x).iter().zip(self.b.iter()).map(|(u, v)| u - v).collect();
        self.a.tr_mul_vec(&r)
    }

    fn exact_minimizer(&self, set: &BoxConstraint) -> Result<Option<Vector>> {
        self.solve(set).map(Some)
    }
}


/// `f(x) = |x - x*|_1` with the sign selection, zero at ties.
#[derive(Debug, Clone)]
pub struct L1Distance {
    xstar: Vector,
}

impl L1Distance {
    pub fn new(xstar: Vector) -> Self {
        L1Distance { xstar }
    }

    pub fn center(&self) -> &Vector {
        &self.xstar
    }
}

pub(crate) fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Selection for L1Distance {
    fn dim(&self) -> usize {
        self.xstar.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.xstar.iter()).map(|(a, b)| (a - b).abs()).sum()
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.xstar.iter()).map(|(a, b)| sign0(a - b)).collect()
    }

    fn exact_minimizer(&self, set: &BoxConstraint) -> Result<Option<Vector>> {
        set.project(&self.xstar).map(Some)
    }
}

/// Observation noise `r^k = e^k + delta^k`.
///
/// `e^k` is i.i.d. Gaussian per coordinate with standard deviation
/// `sigma_e`; `delta^k = delta0 / (1 + k)^rho` times a fixed unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_e: f64,
    pub delta0: f64,
    pub rho: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        sigma_e: 0.0,
        delta0: 0.0,
        rho: 1.0,
    };

    pub fn gaussian(sigma_e: f64) -> Self {
        NoiseSpec {
            sigma_e,
            ..NoiseSpec::NONE
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return Err(Error::usage("noise sigma_e must be non-negative"));
        }
        if !(self.delta0 >= 0.0 && self.delta0.is_finite()) {
            return Err(Error::usage("noise delta0 must be non-negative"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::usage("noise decay rate rho must be positive"));
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        self.sigma_e == 0.0 && self.delta0 == 0.0
    }

    /// Magnitude of the bias at observation `k`.
    pub fn bias_magnitude(&self, k: u64) -> f64 {
        self.delta0 / (1.0 + k as f64).powf(self.rho)
    }
}

/// Stream identifiers for [`rng_stream`]. Each consumer of randomness in a
/// run draws from its own stream of the master seed.
pub mod streams {
    pub const NOISE: u64 = 1;
    pub const DATA: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TEACHER: u64 = 4;
    pub const VALIDATION: u64 = 5;
}

/// Independent random stream `stream` derived from `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Wraps an oracle and adds [`NoiseSpec`] noise to every observation.
///
/// The observation counter `k` starts at zero and advances per query, so
/// noise at step `k` is drawn after the query point is fixed.
#[derive(Debug, Clone)]
pub struct Noisy<O> {
    inner: O,
    noise: NoiseSpec,
    direction: Vec<f64>,
    rng: ChaCha8Rng,
    k: u64,
}

impl<O: Oracle> Noisy<O> {
    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn queries(&self) -> u64 {
        self.k
    }
}

impl<O: Oracle> Oracle for Noisy<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn query(&mut self, x: &[f64]) -> SubgradientEstimate {
        let mut est = self.inner.query(x);
        let k = self.k;
        self.k += 1;
        if self.noise.is_silent() {
            return est;
        }
        let bias = self.noise.bias_magnitude(k);
        let sigma = self.noise.sigma_e;
        let g = est.g.as_mut_slice();
        for (gi, ui) in g.iter_mut().zip(&self.direction) {
            let e: f64 = if sigma > 0.0 {
                sigma * self.rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            *gi += e + bias * ui;
        }
        est
    }

    fn exact_solution(&self, set: &BoxConstraint) -> Result<Option<Vector>> {
        self.inner.exact_solution(set)
    }
}

/// Adds observation noise to `base`, drawing from the noise stream of `seed`.
pub fn with_noise<O: Oracle>(base: O, noise: NoiseSpec, seed: u64) -> Result<Noisy<O>> {
    noise.validate()?;
    let dim = base.dim();
    let unit = 1.0 / (dim as f64).sqrt();
    Ok(Noisy {
        inner: base,
        noise,
        direction: vec![unit; dim],
        rng: rng_stream(seed, streams::NOISE),
        k: 0,
    })
}

/// Oracle for `½|Ax - b|²` with observation noise.
pub fn quadratic_oracle(
    a: Matrix,
    b: Vector,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Noisy<Exact<Quadratic>>> {
    with_noise(Exact(Quadratic::new(a, b)?), noise, seed)
}

/// Oracle for `|x - x*|_1` with observation noise.
pub fn l1_oracle(xstar: Vector, noise: NoiseSpec, seed: u64) -> Result<Noisy<Exact<L1Distance>>> {
    with_noise(Exact(L1Distance::new(xstar)), noise, seed)
}
