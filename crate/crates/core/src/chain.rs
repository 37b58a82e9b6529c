//! Numerical checks of the chain rule along paths.
//!
//! For a generalized-differentiable `f` with selection `g` and an absolutely
//! continuous path `p`,
//!
//! ```text
//! f(p(T)) - f(p(0)) = ∫_0^T <g(p(t)), p'(t)> dt
//! ```
//!
//! for every selection. The integral is approximated by the midpoint rule
//! on a partition that contains all path knots, so the only discretisation
//! error of order `h` comes from cells in which the selection jumps.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{check_dims, dot, norm, Vector};
use crate::oracle::Selection;

type PathFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// A Lipschitz path `[0, T] -> R^n` with an explicit derivative.
#[derive(Clone)]
pub enum Path {
    Segment {
        from: Vector,
        to: Vector,
        horizon: f64,
    },
    /// Linear interpolation of `points` at strictly increasing `times`,
    /// starting at `0`.
    PiecewiseLinear { points: Vec<Vector>, times: Vec<f64> },
    /// Smooth between `breaks` (interior times where the derivative may jump).
    Parametric {
        dim: usize,
        horizon: f64,
        position: PathFn,
        velocity: PathFn,
        breaks: Vec<f64>,
    },
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Path::Segment { from, to, horizon } => f
                .debug_struct("Segment")
                .field("from", from)
                .field("to", to)
                .field("horizon", horizon)
                .finish(),
            Path::PiecewiseLinear { points, times } => f
                .debug_struct("PiecewiseLinear")
                .field("points", points)
                .field("times", times)
                .finish(),
            Path::Parametric {
                dim,
                horizon,
                breaks,
                ..
            } => f
                .debug_struct("Parametric")
                .field("dim", dim)
                .field("horizon", horizon)
                .field("breaks", breaks)
                .finish_non_exhaustive(),
        }
    }
}

fn positive_horizon(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::usage(format!("path horizon must be positive, got {t}")))
    }
}

impl Path {
    pub fn segment(from: Vector, to: Vector, horizon: f64) -> Result<Self> {
        check_dims("segment endpoints", from.dim(), to.dim())?;
        positive_horizon(horizon)?;
        Ok(Path::Segment { from, to, horizon })
    }

    pub fn piecewise_linear(points: Vec<Vector>, times: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() != times.len() {
            return Err(Error::usage("piecewise-linear path needs matching points and times"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::usage("path times must start at 0 and increase strictly"));
        }
        let d = points[0].dim();
        points.iter().try_for_each(|p| check_dims("path points", p.dim(), d))?;
        Ok(Path::PiecewiseLinear { points, times })
    }

    pub fn parametric(
        dim: usize,
        horizon: f64,
        position: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        velocity: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        breaks: Vec<f64>,
    ) -> Result<Self> {
        positive_horizon(horizon)?;
        if breaks.iter().any(|b| !(*b > 0.0 && *b < horizon)) {
            return Err(Error::usage("path breaks must lie inside (0, T)"));
        }
        Ok(Path::Parametric {
            dim,
            horizon,
            position: Arc::new(position),
            velocity: Arc::new(velocity),
            breaks,
        })
    }

    /// Path held at one point.
    pub fn constant(point: Vector, horizon: f64) -> Result<Self> {
        Path::segment(point.clone(), point, horizon)
    }

    pub fn dim(&self) -> usize {
        match self {
            Path::Segment { from, .. } => from.dim(),
            Path::PiecewiseLinear { points, .. } => points[0].dim(),
            Path::Parametric { dim, .. } => *dim,
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Path::Segment { horizon, .. } | Path::Parametric { horizon, .. } => *horizon,
            Path::PiecewiseLinear { times, .. } => *times.last().expect("two points"),
        }
    }

    /// `0`, the interior knots and `T`, sorted.
    pub fn knots(&self) -> Vec<f64> {
        let mut k = vec![0.0];
        match self {
            Path::Segment { .. } => {}
            Path::PiecewiseLinear { times, .. } => k.extend(&times[1..times.len() - 1]),
            Path::Parametric { breaks, .. } => {
                let mut b = breaks.clone();
                b.sort_by(f64::total_cmp);
                b.dedup();
                k.extend(b);
            }
        }
        k.push(self.horizon());
        k
    }

    fn piece(times: &[f64], t: f64) -> usize {
        let i = times.partition_point(|s| *s <= t);
        i.clamp(1, times.len() - 1) - 1
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        match self {
            Path::Segment { from, to, horizon } => {
                let s = t / horizon;
                from.iter().zip(to.iter()).map(|(a, b)| a + s * (b - a)).collect()
            }
            Path::PiecewiseLinear { points, times } => {
                let i = Path::piece(times, t);
                let s = (t - times[i]) / (times[i + 1] - times[i]);
                points[i]
                    .iter()
                    .zip(points[i + 1].iter())
                    .map(|(a, b)| a + s * (b - a))
                    .collect()
            }
            Path::Parametric { position, .. } => position(t),
        }
    }

    /// Derivative at a non-knot time.
    pub fn velocity(&self, t: f64) -> Vec<f64> {
        match self {
            Path::Segment { from, to, horizon } => {
                from.iter().zip(to.iter()).map(|(a, b)| (b - a) / horizon).collect()
            }
            Path::PiecewiseLinear { points, times } => {
                let i = Path::piece(times, t);
                let dt = times[i + 1] - times[i];
                points[i]
                    .iter()
                    .zip(points[i + 1].iter())
                    .map(|(a, b)| (b - a) / dt)
                    .collect()
            }
            Path::Parametric { velocity, .. } => velocity(t),
        }
    }
}

/// Midpoint nodes and weights on a knot-aligned partition with cells `<= h`.
fn midpoint_nodes(path: &Path, h: f64) -> impl Iterator<Item = (f64, f64)> {
    let knots = path.knots();
    let mut nodes = Vec::new();
    for w in knots.windows(2) {
        let len = w[1] - w[0];
        let cells = (len / h).ceil().max(1.0) as usize;
        let width = len / cells as f64;
        nodes.extend((0..cells).map(move |j| (w[0] + (j as f64 + 0.5) * width, width)));
    }
    nodes.into_iter()
}

struct Quadrature {
    value: f64,
    max_subgrad: f64,
    max_speed: f64,
}

fn integrate<S: Selection + ?Sized>(g: &S, path: &Path, h: f64) -> Result<Quadrature> {
    check_dims("path vs selection", path.dim(), g.dim())?;
    let horizon = path.horizon();
    if !(h > 0.0 && h <= horizon / 10.0) {
        return Err(Error::usage(format!(
            "quadrature step {h} must lie in (0, T/10] with T = {horizon}"
        )));
    }
    let mut q = Quadrature {
        value: 0.0,
        max_subgrad: 0.0,
        max_speed: 0.0,
    };
    for (t, w) in midpoint_nodes(path, h) {
        let sel = g.subgradient(&path.point(t));
        let vel = path.velocity(t);
        q.value += w * dot(&sel, &vel);
        q.max_subgrad = q.max_subgrad.max(norm(&sel));
        q.max_speed = q.max_speed.max(norm(&vel));
    }
    Ok(q)
}

/// Midpoint approximation of `∫_0^T <g(p(t)), p'(t)> dt`.
pub fn path_integral<S: Selection + ?Sized>(g: &S, path: &Path, h: f64) -> Result<f64> {
    integrate(g, path, h).map(|q| q.value)
}

/// Outcome of one chain-rule check, rendered as `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    /// `f(p(T)) - f(p(0))`
    pub lhs: f64,
    /// The path integral.
    pub rhs: f64,
    pub gap: f64,
    pub h: f64,
    /// The constant `C` in `tol = C h`.
    pub constant: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ChainReport {
    pub fn render(&self, name: &str) -> String {
        format!(
            "{name}.lhs = {:e}\n{name}.rhs = {:e}\n{name}.gap = {:e}\n{name}.h = {:e}\n\
             {name}.C = {:e}\n{name}.tol = {:e}\n{name}.pass = {}\n",
            self.lhs, self.rhs, self.gap, self.h, self.constant, self.tol, self.pass
        )
    }
}

/// Default calibration factor in `C = factor * max|g| * max|p'|`.
pub const DEFAULT_TOL_FACTOR: f64 = 10.0;

/// Compares the increment of `f` with the path integral of `g`.
///
/// The tolerance is `C h`, with `C` calibrated from the largest selection
/// norm and path speed seen at the quadrature nodes unless `constant` is given.
pub fn chain_rule_check<S: Selection + ?Sized>(
    f: &S,
    path: &Path,
    h: f64,
    constant: Option<f64>,
) -> Result<ChainReport> {
    let q = integrate(f, path, h)?;
    let lhs = f.value(&path.point(path.horizon())) - f.value(&path.point(0.0));
    let gap = (lhs - q.value).abs();
    let constant = constant.unwrap_or(DEFAULT_TOL_FACTOR * q.max_subgrad * q.max_speed);
    let tol = constant * h;
    Ok(ChainReport {
        lhs,
        rhs: q.value,
        gap,
        h,
        constant,
        tol,
        pass: gap <= tol,
    })
}

/// `x -> f_0(f_1(x), ..., f_m(x))` with selection `sum_i [g_0]_i g_i(x)`.
pub struct Composition<O, I> {
    outer: O,
    inners: Vec<I>,
}

pub fn compose_subgrad<O: Selection, I: Selection>(outer: O, inners: Vec<I>) -> Result<Composition<O, I>> {
    if inners.is_empty() {
        return Err(Error::usage("composition needs at least one inner function"));
    }
    check_dims("outer arity vs inner count", outer.dim(), inners.len())?;
    let d = inners[0].dim();
    inners.iter().try_for_each(|f| check_dims("inner function domains", f.dim(), d))?;
    Ok(Composition { outer, inners })
}

impl<O: Selection, I: Selection> Selection for Composition<O, I> {
    fn dim(&self) -> usize {
        self.inners[0].dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let u: Vec<f64> = self.inners.iter().map(|f| f.value(x)).collect();
        self.outer.value(&u)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let u: Vec<f64> = self.inners.iter().map(|f| f.value(x)).collect();
        let g0 = self.outer.subgradient(&u);
        let mut out = vec![0.0; self.dim()];
        for (w, f) in g0.iter().zip(&self.inners) {
            if *w != 0.0 {
                crate::linalg::axpy(*w, &f.subgradient(x), &mut out);
            }
        }
        out
    }
}

/// A selection given by two closures; handy for ad-hoc test functions.
pub struct FnSelection<F, G> {
    dim: usize,
    value: F,
    subgradient: G,
}

impl<F, G> FnSelection<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(dim: usize, value: F, subgradient: G) -> Self {
        FnSelection {
            dim,
            value,
            subgradient,
        }
    }
}

impl<F, G> Selection for FnSelection<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        (self.subgradient)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::sign0;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    fn abs_fn(tie: f64) -> impl Selection {
        FnSelection::new(
            1,
            |x: &[f64]| x[0].abs(),
            move |x: &[f64]| vec![if x[0] == 0.0 { tie } else { sign0(x[0]) }],
        )
    }

    fn max2() -> impl Selection {
        FnSelection::new(
            2,
            |x: &[f64]| x[0].max(x[1]),
            |x: &[f64]| if x[0] >= x[1] { vec![1.0, 0.0] } else { vec![0.0, 1.0] },
        )
    }

    #[test]
    fn abs_along_descending_segment() {
        // ∫_0^1 (+1)(-1) dt + ∫_1^2 (-1)(-1) dt = 0
        let p = Path::segment(v(&[1.0]), v(&[-1.0]), 2.0).unwrap();
        let i = path_integral(&abs_fn(0.0), &p, 1e-3).unwrap();
        assert!(i.abs() < 1e-12);
        let r = chain_rule_check(&abs_fn(0.0), &p, 1e-3, None).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn affine_function_is_exact() {
        let f = FnSelection::new(3, |x: &[f64]| 2.0 * x[0] - x[1] + 0.5 * x[2] + 1.0, |_: &[f64]| vec![2.0, -1.0, 0.5]);
        let p = Path::parametric(
            3,
            1.5,
            |t| vec![t.sin(), t * t, 1.0 - t],
            |t| vec![t.cos(), 2.0 * t, -1.0],
            vec![],
        )
        .unwrap();
        let r = chain_rule_check(&f, &p, 1e-3, None).unwrap();
        // Midpoint on smooth integrands: O(h^2).
        assert!(r.gap < 1e-6, "gap {}", r.gap);
    }

    #[test]
    fn constant_path_has_zero_gap() {
        let p = Path::constant(v(&[0.3, -0.2]), 1.0).unwrap();
        let r = chain_rule_check(&max2(), &p, 1e-2, None).unwrap();
        assert_eq!(r.gap, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn max_along_antidiagonal() {
        // p(t) = (t, 1 - t): max is 1 - t then t, kink at 1/2, increment 0.
        let p = Path::segment(v(&[0.0, 1.0]), v(&[1.0, 0.0]), 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for h in [0.03, 3e-3, 3e-4] {
            let i = path_integral(&max2(), &p, h).unwrap();
            assert!(i.abs() <= h);
            assert!(i.abs() <= prev);
            prev = i.abs();
        }
    }

    #[test]
    fn gap_is_first_order_in_h() {
        // Kink at t = 1/3, off every midpoint grid below.
        let p = Path::segment(v(&[-1.0 / 3.0]), v(&[2.0 / 3.0]), 1.0).unwrap();
        let hs = [1.0 / 14.0, 1.0 / 140.0, 1.0 / 1400.0, 1.0 / 14000.0];
        let gaps: Vec<f64> = hs
            .iter()
            .map(|h| chain_rule_check(&abs_fn(0.0), &p, *h, None).unwrap().gap)
            .collect();
        for w in gaps.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 10.0).abs() < 0.5, "ratio {ratio}");
        }
    }

    #[test]
    fn selections_differing_at_a_tie_agree() {
        // Eleven cells of width 0.2 on [0, 2.2]: the middle midpoint t = 1.1
        // lands exactly on the kink of |.|.
        let p = Path::segment(v(&[-0.5]), v(&[0.5]), 2.2).unwrap();
        let h = 0.2000001;
        assert_eq!(p.point(5.5 * 0.2), vec![0.0]);
        let a = chain_rule_check(&abs_fn(0.0), &p, h, None).unwrap();
        let b = chain_rule_check(&abs_fn(1.0), &p, h, None).unwrap();
        assert_ne!(a.rhs, b.rhs);
        assert!((a.rhs - b.rhs).abs() <= a.tol);
        assert!(a.pass && b.pass);
    }

    #[test]
    fn piecewise_linear_paths_split_at_knots() {
        let p = Path::piecewise_linear(
            vec![v(&[0.0, 0.0]), v(&[1.0, 2.0]), v(&[-1.0, 0.5])],
            vec![0.0, 0.37, 1.0],
        )
        .unwrap();
        assert_eq!(p.knots(), vec![0.0, 0.37, 1.0]);
        assert_eq!(p.point(0.37), vec![1.0, 2.0]);
        let quad = FnSelection::new(2, |x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]), |x: &[f64]| x.to_vec());
        let r = chain_rule_check(&quad, &p, 1e-3, None).unwrap();
        assert!(r.gap < 1e-6);
        assert!(Path::piecewise_linear(vec![v(&[0.0])], vec![0.0]).is_err());
        assert!(Path::piecewise_linear(vec![v(&[0.0]), v(&[1.0])], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_coarse_or_nonpositive_steps() {
        let p = Path::segment(v(&[0.0]), v(&[1.0]), 1.0).unwrap();
        assert!(path_integral(&abs_fn(0.0), &p, 0.2).is_err());
        assert!(path_integral(&abs_fn(0.0), &p, 0.0).is_err());
        assert!(path_integral(&max2(), &p, 0.01).is_err());
    }

    #[test]
    fn composition_examples() {
        let id = FnSelection::new(1, |u: &[f64]| u[0], |_: &[f64]| vec![1.0]);
        let inner = max2();
        let c = compose_subgrad(id, vec![inner]).unwrap();
        assert_eq!(c.subgradient(&[0.2, 0.7]), max2().subgradient(&[0.2, 0.7]));

        let a = [1.5, -2.0, 0.5];
        let half_sq = FnSelection::new(1, |u: &[f64]| 0.5 * u[0] * u[0], |u: &[f64]| vec![u[0]]);
        let lin = FnSelection::new(3, move |x: &[f64]| dot(&a, x), move |_: &[f64]| a.to_vec());
        let c = compose_subgrad(half_sq, vec![lin]).unwrap();
        let x = [0.3, 0.1, -1.0];
        let ax = dot(&a, &x);
        let expect: Vec<f64> = a.iter().map(|ai| ax * ai).collect();
        assert_eq!(c.subgradient(&x), expect);

        let two = FnSelection::new(2, |u: &[f64]| u[0] + u[1], |_: &[f64]| vec![1.0, 1.0]);
        assert!(compose_subgrad(two, vec![max2()]).is_err());
    }

    #[test]
    fn report_renders_key_value_lines() {
        let p = Path::segment(v(&[1.0]), v(&[-1.0]), 2.0).unwrap();
        let text = chain_rule_check(&abs_fn(0.0), &p, 1e-2, None).unwrap().render("abs");
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().all(|l| l.starts_with("abs.") && l.contains(" = ")));
        assert!(text.contains("abs.pass = true"));
    }
}
