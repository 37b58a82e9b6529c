//! The single time-scale method with subgradient averaging, and the plain
//! projected stochastic subgradient baseline.
//!
//! One averaged step, in order:
//!
//! ```text
//! y^k     = ybar(x^k, z^k)                      (projection of x^k - z^k/beta)
//! x^{k+1} = x^k + tau_k (y^k - x^k)
//! g^{k+1} = oracle(x^{k+1})
//! z^{k+1} = (1 - a tau_k) z^k + a tau_k g^{k+1}
//! ```
//!
//! The observation for `z^{k+1}` is taken at the new point `x^{k+1}`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::gap::{self, FEASIBILITY_TOL};
use crate::linalg::{check_dims, dist, norm_inf, Vector};
use crate::oracle::Oracle;
use crate::schedule::{AlgoParams, ZInit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Averaged direction, single time scale.
    Ssam,
    /// Projected stochastic subgradient, no averaging.
    Sgd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ssam => "ssam",
            Method::Sgd => "sgd",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssam" => Ok(Method::Ssam),
            "sgd" => Ok(Method::Sgd),
            other => Err(Error::usage(format!("unknown method '{other}' (expected ssam or sgd)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vector,
    /// Averaged direction for the averaged method; the last observation for
    /// the baseline.
    pub z: Vector,
    pub k: u64,
    /// Accumulated stepsize `sum_{j<k} tau_j`.
    pub t: f64,
    /// Loss estimate observed at `x`, if any.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub t: f64,
    pub loss: f64,
    pub eta: f64,
    pub residual: f64,
    pub step_norm: f64,
    pub dist: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.loss)
    }
}

fn check_start<O: Oracle + ?Sized, S: FeasibleSet + ?Sized>(
    x0: &Vector,
    oracle: &O,
    set: &S,
) -> Result<()> {
    check_dims("starting point vs oracle", x0.dim(), oracle.dim())?;
    check_dims("starting point vs feasible set", x0.dim(), set.dim())?;
    if !set.contains(x0, FEASIBILITY_TOL) {
        return Err(Error::usage("starting point is infeasible"));
    }
    Ok(())
}

/// `x = x0`, `z = g⁰` (or zero), `k = 0`, `t = 0`. The first observation is
/// always drawn so both seeding choices consume the same oracle sequence.
pub fn ssam_init<O: Oracle + ?Sized, S: FeasibleSet + ?Sized>(
    x0: &Vector,
    oracle: &mut O,
    params: &AlgoParams,
    set: &S,
) -> Result<IterateState> {
    check_start(x0, oracle, set)?;
    let x = set.project(x0)?;
    let est = oracle.query(&x);
    let z = match params.z_init {
        ZInit::FirstObservation => est.g,
        ZInit::Zero => Vector::zeros(x.dim()),
    };
    Ok(IterateState {
        x,
        z,
        k: 0,
        t: 0.0,
        loss: Some(est.f_estimate),
    })
}

/// Baseline start: no observation is drawn until the first step.
pub fn sgd_init<O: Oracle + ?Sized, S: FeasibleSet + ?Sized>(
    x0: &Vector,
    oracle: &O,
    set: &S,
) -> Result<IterateState> {
    check_start(x0, oracle, set)?;
    Ok(IterateState {
        x: set.project(x0)?,
        z: Vector::zeros(x0.dim()),
        k: 0,
        t: 0.0,
        loss: None,
    })
}

/// Moves to `x + tau (y - x)`, clamped onto the set to absorb rounding.
fn convex_step<S: FeasibleSet + ?Sized>(x: &[f64], y: &[f64], tau: f64, set: &S) -> Vec<f64> {
    let raw: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| xi + tau * (yi - xi)).collect();
    let mut out = vec![0.0; raw.len()];
    set.project_into(&raw, &mut out);
    out
}

/// One averaged step. The returned row describes the incoming state.
pub fn ssam_step<O: Oracle + ?Sized, S: FeasibleSet + ?Sized>(
    state: IterateState,
    oracle: &mut O,
    params: &AlgoParams,
    set: &S,
) -> (IterateState, TraceRow) {
    let tau = params.tau(state.k);
    let gap = gap::eval_unchecked(&state.x, &state.z, params.beta, set);
    let x_next = convex_step(&state.x, &gap.ybar, tau, set);
    assert!(set.contains(&x_next, 0.0), "iterate left the feasible set");

    let est = oracle.query(&x_next);
    let w = params.a * tau;
    let z_next: Vec<f64> = state
        .z
        .iter()
        .zip(est.g.iter())
        .map(|(z, g)| (1.0 - w) * z + w * g)
        .collect();

    let row = TraceRow {
        k: state.k,
        t: state.t,
        loss: state.loss.unwrap_or(f64::NAN),
        eta: gap.eta,
        residual: gap.residual,
        step_norm: dist(&x_next, &state.x),
        dist: None,
    };
    let next = IterateState {
        x: Vector::from_vec_unchecked(x_next),
        z: Vector::from_vec_unchecked(z_next),
        k: state.k + 1,
        t: state.t + tau,
        loss: Some(est.f_estimate),
    };
    (next, row)
}

/// One projected subgradient step `x^{k+1} = P(x^k - tau_k g^k)`. The row's
/// gap is evaluated at `(x^k, g^k)`.
pub fn sgd_step<O: Oracle + ?Sized, S: FeasibleSet + ?Sized>(
    state: IterateState,
    oracle: &mut O,
    params: &AlgoParams,
    set: &S,
) -> (IterateState, TraceRow) {
    let tau = params.tau(state.k);
    let est = oracle.query(&state.x);
    let gap = gap::eval_unchecked(&state.x, &est.g, params.beta, set);
    let shifted: Vec<f64> = state.x.iter().zip(est.g.iter()).map(|(x, g)| x - tau * g).collect();
    let mut x_next = vec![0.0; shifted.len()];
    set.project_into(&shifted, &mut x_next);

    let row = TraceRow {
        k: state.k,
        t: state.t,
        loss: est.f_estimate,
        eta: gap.eta,
        residual: gap.residual,
        step_norm: dist(&x_next, &state.x),
        dist: None,
    };
    let next = IterateState {
        x: Vector::from_vec_unchecked(x_next),
        z: est.g,
        k: state.k + 1,
        t: state.t + tau,
        loss: None,
    };
    (next, row)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after the first row whose residual is at or below this value.
    pub early_stop: Option<f64>,
    /// Known solution; fills the `dist` column.
    pub reference: Option<Vector>,
    /// Expected bound on `|z|_inf`; excursions are counted, not fatal.
    pub hull_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub state: IterateState,
    pub hull_excursions: u64,
    pub stopped_early: bool,
}

/// Runs `iters` steps of `method` from `x0`, one trace row per step.
///
/// `observer` sees every row together with the state it produced.
#[allow(clippy::too_many_arguments)]
pub fn run<O, S, F>(
    method: Method,
    oracle: &mut O,
    params: &AlgoParams,
    set: &S,
    x0: &Vector,
    iters: u64,
    opts: &RunOptions,
    mut observer: F,
) -> Result<RunOutcome>
where
    O: Oracle + ?Sized,
    S: FeasibleSet + ?Sized,
    F: FnMut(&TraceRow, &IterateState),
{
    if iters == 0 {
        return Err(Error::usage("iteration budget must be at least 1"));
    }
    if let Some(r) = &opts.reference {
        check_dims("reference solution", r.dim(), x0.dim())?;
    }
    let mut state = match method {
        Method::Ssam => ssam_init(x0, oracle, params, set)?,
        Method::Sgd => sgd_init(x0, oracle, set)?,
    };
    let mut trace = Trace {
        rows: Vec::with_capacity(usize::try_from(iters).unwrap_or(0).min(1 << 24)),
    };
    let mut hull_excursions = 0;
    let mut stopped_early = false;
    for _ in 0..iters {
        let dist_now = opts.reference.as_ref().map(|r| dist(&state.x, r));
        let (next, mut row) = match method {
            Method::Ssam => ssam_step(state, oracle, params, set),
            Method::Sgd => sgd_step(state, oracle, params, set),
        };
        row.dist = dist_now;
        if opts.hull_bound.is_some_and(|b| norm_inf(&next.z) > b) {
            hull_excursions += 1;
        }
        observer(&row, &next);
        let stop = opts.early_stop.is_some_and(|tol| row.residual <= tol);
        trace.rows.push(row);
        state = next;
        if stop {
            stopped_early = true;
            break;
        }
    }
    Ok(RunOutcome {
        trace,
        state,
        hull_excursions,
        stopped_early,
    })
}
