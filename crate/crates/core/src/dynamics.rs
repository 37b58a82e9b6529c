//! Explicit Euler integration of the limiting flow
//!
//! ```text
//! x' = ybar(x, z) - x,     z' = a (g(x) - z),   g(x) a fixed selection
//! ```
//!
//! and the Lyapunov function `W(x, z) = a f(x) - eta(x, z)`, which should
//! decrease at rate at least `a beta |x'|^2` along exact solutions.

use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::gap::{self, FEASIBILITY_TOL};
use crate::linalg::{check_dims, dist, Vector};
use crate::optimizer::{Trace, TraceRow};
use crate::oracle::Selection;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub x: Vector,
    pub z: Vector,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovReading {
    pub t: f64,
    /// `a f(x) - eta(x, z)`
    pub w: f64,
    pub f_val: f64,
    pub eta_val: f64,
    /// `|x'| = |ybar(x, z) - x|`
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub a: f64,
    pub beta: f64,
}

impl FlowParams {
    pub fn new(a: f64, beta: f64) -> Result<Self> {
        if !(a > 0.0 && beta > 0.0 && a.is_finite() && beta.is_finite()) {
            return Err(Error::usage("flow parameters a and beta must be positive"));
        }
        Ok(FlowParams { a, beta })
    }
}

fn reading<S: Selection + ?Sized, F: FeasibleSet + ?Sized>(
    state: &FlowState,
    f: &S,
    p: FlowParams,
    set: &F,
) -> (LyapunovReading, Vector) {
    let g = gap::eval_unchecked(&state.x, &state.z, p.beta, set);
    let f_val = f.value(&state.x);
    let r = LyapunovReading {
        t: state.t,
        w: p.a * f_val - g.eta,
        f_val,
        eta_val: g.eta,
        speed: g.residual,
    };
    (r, g.ybar)
}

fn advance<S: Selection + ?Sized, F: FeasibleSet + ?Sized>(
    state: &FlowState,
    ybar: &[f64],
    g: &S,
    p: FlowParams,
    set: &F,
    h: f64,
) -> FlowState {
    let raw: Vec<f64> = state
        .x
        .iter()
        .zip(ybar)
        .map(|(x, y)| x + h * (y - x))
        .collect();
    let mut x = vec![0.0; raw.len()];
    set.project_into(&raw, &mut x);
    let sel = g.subgradient(&state.x);
    let z: Vec<f64> = state
        .z
        .iter()
        .zip(&sel)
        .map(|(z, s)| z + h * p.a * (s - z))
        .collect();
    FlowState {
        x: Vector::from_vec_unchecked(x),
        z: Vector::from_vec_unchecked(z),
        t: state.t + h,
    }
}

/// One explicit Euler step; the new `x` is re-projected onto the set.
pub fn flow_step<S: Selection + ?Sized, F: FeasibleSet + ?Sized>(
    state: &FlowState,
    g: &S,
    params: FlowParams,
    set: &F,
    h: f64,
) -> Result<FlowState> {
    check_state(state, g, set)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::usage("flow step must be positive"));
    }
    let y = gap::ybar(&state.x, &state.z, params.beta, set)?;
    Ok(advance(state, &y, g, params, set, h))
}

fn check_state<S: Selection + ?Sized, F: FeasibleSet + ?Sized>(
    state: &FlowState,
    g: &S,
    set: &F,
) -> Result<()> {
    check_dims("flow state", state.x.dim(), g.dim())?;
    check_dims("flow direction", state.z.dim(), g.dim())?;
    check_dims("flow feasible set", set.dim(), g.dim())?;
    if !set.contains(&state.x, FEASIBILITY_TOL) {
        return Err(Error::usage("flow started at an infeasible point"));
    }
    Ok(())
}

/// A finished trajectory with its Lyapunov readings.
#[derive(Debug, Clone)]
pub struct Integration {
    pub h: f64,
    pub params: FlowParams,
    /// `states[j]` is the state at `t = j h`; one more than the number of steps.
    pub states: Vec<FlowState>,
    pub readings: Vec<LyapunovReading>,
}

impl Integration {
    /// Per-step violations `W_{j+1} - W_j + a beta h |x'_j|^2`.
    pub fn violations(&self) -> impl Iterator<Item = f64> + '_ {
        let c = self.params.a * self.params.beta * self.h;
        self.readings
            .windows(2)
            .map(move |r| r[1].w - r[0].w + c * r[0].speed * r[0].speed)
    }

    /// Largest positive per-step violation, zero if there is none.
    pub fn max_violation(&self) -> f64 {
        self.violations().fold(0.0, f64::max)
    }

    /// `W(T) - W(0)`
    pub fn w_change(&self) -> f64 {
        self.readings.last().expect("nonempty").w - self.readings[0].w
    }

    /// `-a beta sum_j h |x'_j|^2`
    pub fn descent_bound(&self) -> f64 {
        let steps = self.readings.len() - 1;
        -self.params.a
            * self.params.beta
            * self.h
            * self.readings[..steps].iter().map(|r| r.speed * r.speed).sum::<f64>()
    }

    /// Whether `W(T) - W(0) <= -a beta sum h |x'|^2 + tol`.
    pub fn descent_holds(&self, tol: f64) -> bool {
        self.w_change() <= self.descent_bound() + tol
    }

    pub fn final_state(&self) -> &FlowState {
        self.states.last().expect("nonempty")
    }

    /// Readings in the optimizer trace layout: `loss` holds `f`, `residual`
    /// the speed `|x'|`, `step_norm` the Euler displacement `h |x'|`, and
    /// `dist` the distance to `reference` when given.
    pub fn to_trace(&self, reference: Option<&Vector>) -> Trace {
        Trace {
            rows: self
                .readings
                .iter()
                .zip(&self.states)
                .enumerate()
                .map(|(j, (r, s))| TraceRow {
                    k: j as u64,
                    t: r.t,
                    loss: r.f_val,
                    eta: r.eta_val,
                    residual: r.speed,
                    step_norm: self.h * r.speed,
                    dist: reference.map(|x| dist(&s.x, x)),
                })
                .collect(),
        }
    }
}

/// Integrates the flow from `(x0, z0)` over `[0, horizon]` with step `h`,
/// recording a Lyapunov reading at every grid time.
#[allow(clippy::too_many_arguments)]
pub fn integrate<S: Selection + ?Sized, F: FeasibleSet + ?Sized>(
    x0: &Vector,
    z0: &Vector,
    g: &S,
    params: FlowParams,
    set: &F,
    horizon: f64,
    h: f64,
) -> Result<Integration> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::usage("integration horizon must be positive"));
    }
    if !(h > 0.0 && h <= horizon) {
        return Err(Error::usage("flow step must lie in (0, T]"));
    }
    let mut state = FlowState {
        x: x0.clone(),
        z: z0.clone(),
        t: 0.0,
    };
    check_state(&state, g, set)?;
    let steps = (horizon / h).round().max(1.0) as usize;
    let mut states = Vec::with_capacity(steps + 1);
    let mut readings = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let (r, y) = reading(&state, g, params, set);
        readings.push(r);
        if j == steps {
            states.push(state);
            break;
        }
        let mut next = advance(&state, &y, g, params, set, h);
        next.t = (j + 1) as f64 * h;
        states.push(std::mem::replace(&mut state, next));
    }
    Ok(Integration {
        h,
        params,
        states,
        readings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasible::BoxConstraint;
    use crate::linalg::Matrix;
    use crate::oracle::{L1Distance, Quadratic};

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    fn fp(a: f64, beta: f64) -> FlowParams {
        FlowParams::new(a, beta).unwrap()
    }

    #[test]
    fn equilibrium_is_fixed() {
        let q = Quadratic::new(Matrix::identity(2), v(&[0.5, -0.25])).unwrap();
        let set = BoxConstraint::uniform(2, -1.0, 1.0).unwrap();
        let x = v(&[0.5, -0.25]);
        let z = v(&q.subgradient(&x));
        let s = FlowState { x: x.clone(), z: z.clone(), t: 0.0 };
        let next = flow_step(&s, &q, fp(0.5, 1.0), &set, 0.1).unwrap();
        assert_eq!((next.x, next.z), (x.clone(), z.clone()));

        let run = integrate(&x, &z, &q, fp(0.5, 1.0), &set, 1.0, 0.01).unwrap();
        assert!(run.readings.iter().all(|r| r.w == run.readings[0].w && r.speed == 0.0));
    }

    #[test]
    fn face_with_normal_direction_is_fixed() {
        // x on the upper face, -z points outward: ybar = x.
        let l1 = L1Distance::new(v(&[3.0, 0.0]));
        let set = BoxConstraint::uniform(2, -1.0, 1.0).unwrap();
        let s = FlowState {
            x: v(&[1.0, 0.0]),
            z: v(&[-1.0, 0.0]),
            t: 0.0,
        };
        assert_eq!(gap::ybar(&s.x, &s.z, 1.0, &set).unwrap(), s.x);
        let next = flow_step(&s, &l1, fp(1.0, 1.0), &set, 0.05).unwrap();
        assert_eq!(next.x, s.x);
    }

    /// Exact solution of the interior linear system for f = ½ c x² in one
    /// dimension: x' = -z/beta, z' = a (c x - z).
    fn linear_exact(c: f64, a: f64, beta: f64, x0: f64, z0: f64, t: f64) -> f64 {
        // Characteristic polynomial r^2 + a r + a c / beta = 0.
        let disc = a * a - 4.0 * a * c / beta;
        assert!(disc > 0.0);
        let (r1, r2) = ((-a + disc.sqrt()) / 2.0, (-a - disc.sqrt()) / 2.0);
        let dx0 = -z0 / beta;
        let c2 = (dx0 - r1 * x0) / (r2 - r1);
        let c1 = x0 - c2;
        c1 * (r1 * t).exp() + c2 * (r2 * t).exp()
    }

    #[test]
    fn matches_closed_form_linear_flow() {
        let (c, a, beta) = (0.5_f64, 4.0, 1.0);
        let q = Quadratic::new(Matrix::new(1, 1, vec![c.sqrt()]).unwrap(), v(&[0.0])).unwrap();
        let set = BoxConstraint::unbounded(1);
        let (x0, z0) = (1.0, 0.2);
        let mut errs = vec![];
        for h in [1e-2, 5e-3, 2.5e-3] {
            let run = integrate(&v(&[x0]), &v(&[z0]), &q, fp(a, beta), &set, 2.0, h).unwrap();
            let err = run
                .states
                .iter()
                .map(|s| (s.x[0] - linear_exact(c, a, beta, x0, z0, s.t)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 0.05);
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
        }
    }

    #[test]
    fn quadratic_descent_and_convergence() {
        let a_mat = Matrix::diag(&[1.0, 2.0, 0.7]).unwrap();
        let q = Quadratic::new(a_mat, v(&[2.0, -0.5, 0.3])).unwrap();
        let set = BoxConstraint::uniform(3, -1.0, 1.0).unwrap();
        let xstar = q.solve(&set).unwrap();
        let x0 = v(&[-0.5, 0.5, -0.9]);
        let z0 = v(&q.subgradient(&x0));
        let run = integrate(&x0, &z0, &q, fp(1.0, 1.0), &set, 50.0, 1e-3).unwrap();
        let last = run.final_state();
        let res = gap::eta(&last.x, &last.z, 1.0, &set).unwrap().residual;
        assert!(res <= 1e-3);
        assert!(dist(&last.x, &xstar) < 1e-3);
        assert!(run.descent_holds(10.0 * 1e-3 * 50.0));
        assert!(run.max_violation() <= 10.0 * 1e-3);
        assert!(run.states.iter().all(|s| set.contains(&s.x, 0.0)));
        let tr = run.to_trace(Some(&xstar));
        assert_eq!(tr.len(), run.readings.len());
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = Quadratic::new(Matrix::identity(1), v(&[0.0])).unwrap();
        let set = BoxConstraint::uniform(1, -1.0, 1.0).unwrap();
        assert!(integrate(&v(&[2.0]), &v(&[0.0]), &q, fp(1.0, 1.0), &set, 1.0, 0.1).is_err());
        assert!(integrate(&v(&[0.0]), &v(&[0.0]), &q, fp(1.0, 1.0), &set, 0.0, 0.1).is_err());
        assert!(FlowParams::new(0.0, 1.0).is_err());
    }
}
