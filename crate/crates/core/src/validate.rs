//! Validation suites for the gap function, the chain rule on paths, the
//! network subgradient and the limiting dynamics.
//!
//! Every suite compares library output against an independent computation
//! (brute-force grids, finite differences, analytic formulas, fine-step
//! reference trajectories) and records one [`Check`] per property. The
//! report renders as `key = value` lines.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::chain::{chain_rule_check, compose_subgrad, path_integral, FnSelection, Path};
use crate::data::synth_teacher;
use crate::dynamics::{integrate, FlowParams};
use crate::error::{Error, Result};
use crate::feasible::{BoxConstraint, FeasibleSet};
use crate::gap::{eta, optimality_slack};
use crate::linalg::{dist, norm, Vector};
use crate::optimizer::{run, Method, RunOptions};
use crate::oracle::{rng_stream, streams, Exact, Selection};
use crate::problems;
use crate::relu::{forward, sample_subgrad, two_layer_closed_form, BatchLoss, NetArch, NetParams, Sample};
use crate::schedule::{AlgoParams, StepLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Gap,
    Chain,
    Compose,
    Dynamics,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Gap, Suite::Chain, Suite::Compose, Suite::Dynamics];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Gap => "gap",
            Suite::Chain => "chain",
            Suite::Compose => "compose",
            Suite::Dynamics => "dynamics",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gap" => Ok(Suite::Gap),
            "chain" => Ok(Suite::Chain),
            "compose" => Ok(Suite::Compose),
            "dynamics" => Ok(Suite::Dynamics),
            _ => Err(Error::usage(format!(
                "unknown suite '{s}' (gap, chain, compose, dynamics)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub suites: Vec<Suite>,
    /// Quadrature step for the chain-rule pass/fail checks.
    pub h: f64,
    /// Random instances in the gap suite.
    pub gap_instances: usize,
    /// Random paths per function family in the chain suite.
    pub paths: usize,
    /// Random points in the finite-difference check.
    pub fd_points: usize,
    /// Flips the sign of the test selections, which must make the chain and
    /// compose suites fail.
    pub inject_fault: bool,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            suites: Suite::ALL.to_vec(),
            h: 1e-4,
            gap_instances: 10_000,
            paths: 100,
            fd_points: 1000,
            inject_fault: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
}

/// One measured property with its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub value: f64,
    pub bound: Bound,
}

impl Check {
    pub fn pass(&self) -> bool {
        match self.bound {
            Bound::AtMost(b) => self.value <= b,
            Bound::AtLeast(b) => self.value >= b,
        }
    }

    pub fn key(&self) -> String {
        format!("{}.{}", self.suite, self.name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    /// Wall time per suite in seconds.
    pub seconds: Vec<(Suite, f64)>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(Check::pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass())
    }

    pub fn suite_pass(&self, suite: Suite) -> bool {
        self.checks.iter().filter(|c| c.suite == suite).all(Check::pass)
    }

    pub fn get(&self, key: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.key() == key)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let key = c.key();
            s.push_str(&format!("{key}.value = {:e}\n", c.value));
            match c.bound {
                Bound::AtMost(b) => s.push_str(&format!("{key}.max = {b:e}\n")),
                Bound::AtLeast(b) => s.push_str(&format!("{key}.min = {b:e}\n")),
            }
            s.push_str(&format!("{key}.pass = {}\n", c.pass()));
        }
        for (suite, secs) in &self.seconds {
            s.push_str(&format!("{suite}.seconds = {secs:.3}\n"));
        }
        s.push_str(&format!("all.pass = {}\n", self.all_pass()));
        s
    }
}

/// Runs the selected suites.
pub fn validate(opts: &ValidateOptions) -> Result<Report> {
    if !(opts.h > 0.0 && opts.h <= 0.1) {
        return Err(Error::usage("chain quadrature step h must lie in (0, 0.1]"));
    }
    let mut report = Report::default();
    let mut suites = opts.suites.clone();
    suites.sort();
    suites.dedup();
    for suite in suites {
        let start = Instant::now();
        let mut rng = rng_stream(opts.seed.wrapping_add(suite as u64), streams::VALIDATION);
        let mut out = Vec::new();
        match suite {
            Suite::Gap => gap_suite(&mut rng, opts, &mut out)?,
            Suite::Chain => chain_suite(&mut rng, opts, &mut out)?,
            Suite::Compose => compose_suite(&mut rng, opts, &mut out)?,
            Suite::Dynamics => dynamics_suite(opts, &mut out)?,
        }
        report.checks.extend(out.into_iter().map(|(name, value, bound)| Check {
            suite,
            name,
            value,
            bound,
        }));
        report.seconds.push((suite, start.elapsed().as_secs_f64()));
    }
    Ok(report)
}

type Out = Vec<(String, f64, Bound)>;

fn push(out: &mut Out, name: &str, value: f64, bound: Bound) {
    // NaN never passes either bound.
    out.push((name.to_owned(), value, bound));
}

fn unif(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- gap suite

fn gap_objective(x: &[f64], z: &[f64], beta: f64, y: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| {
            let d = y[i] - x[i];
            z[i] * d + 0.5 * beta * d * d
        })
        .sum()
}

/// Minimises the gap objective by repeatedly zooming an 11-point-per-axis
/// grid around its best node. Does not use projection.
fn brute_gap(x: &[f64], z: &[f64], beta: f64, lo: &[f64], hi: &[f64]) -> (f64, Vec<f64>) {
    const PTS: usize = 11;
    let d = x.len();
    let (mut a, mut b) = (lo.to_vec(), hi.to_vec());
    let mut best = (f64::INFINITY, x.to_vec());
    let mut y = vec![0.0; d];
    for _ in 0..60 {
        for flat in 0..PTS.pow(d as u32) {
            let mut r = flat;
            for i in 0..d {
                let j = r % PTS;
                r /= PTS;
                y[i] = a[i] + (b[i] - a[i]) * j as f64 / (PTS - 1) as f64;
            }
            let v = gap_objective(x, z, beta, &y);
            if v < best.0 {
                best = (v, y.clone());
            }
        }
        for i in 0..d {
            let step = (b[i] - a[i]) / (PTS - 1) as f64;
            a[i] = (best.1[i] - step).max(lo[i]);
            b[i] = (best.1[i] + step).min(hi[i]);
        }
    }
    best
}

fn gap_suite(rng: &mut ChaCha8Rng, opts: &ValidateOptions, out: &mut Out) -> Result<()> {
    let mut eta_max = f64::NEG_INFINITY;
    let mut slack_max = f64::NEG_INFINITY;
    let mut zero_dir = 0.0f64;
    let mut grid_eta = 0.0f64;
    let mut grid_y = 0.0f64;
    let mut lip = 0.0f64;
    for i in 0..opts.gap_instances {
        let d = 1 + i % 10;
        let lo: Vec<f64> = (0..d).map(|_| unif(rng, -2.0, 0.5)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + unif(rng, 0.1, 3.0)).collect();
        let x: Vec<f64> = (0..d)
            .map(|j| match rng.random_range(0..5) {
                0 => lo[j],
                1 => hi[j],
                _ => unif(rng, lo[j], hi[j]),
            })
            .collect();
        let scale = 10f64.powf(unif(rng, -2.0, 2.0));
        let z: Vec<f64> = (0..d).map(|_| scale * normal(rng)).collect();
        let beta = 10f64.powf(unif(rng, -1.0, 1.0));
        let set = BoxConstraint::new(Vector::new(lo.clone())?, Vector::new(hi.clone())?)?;

        let r = eta(&x, &z, beta, &set)?;
        eta_max = eta_max.max(r.eta);
        slack_max = slack_max.max(optimality_slack(&x, &z, beta, &r.ybar));
        zero_dir = zero_dir.max(eta(&x, &vec![0.0; d], beta, &set)?.eta.abs());

        if d <= 3 {
            let (v, y) = brute_gap(&x, &z, beta, &lo, &hi);
            grid_eta = grid_eta.max((v - r.eta).abs());
            grid_y = grid_y.max(dist(&y, &r.ybar));
        }

        let eps = 1e-6;
        let xp: Vec<f64> = x.iter().map(|v| v + eps * normal(rng)).collect();
        let mut xp_in = vec![0.0; d];
        set.project_into(&xp, &mut xp_in);
        let zp: Vec<f64> = z.iter().map(|v| v + eps * normal(rng)).collect();
        let moved = dist(&x, &xp_in) + dist(&z, &zp);
        if moved > 0.0 {
            let diam = dist(&lo, &hi);
            let bound = diam + norm(&z) + beta * diam;
            let change = (eta(&xp_in, &zp, beta, &set)?.eta - r.eta).abs();
            lip = lip.max(change / moved / bound);
        }
    }
    push(out, "eta_max", eta_max, Bound::AtMost(0.0));
    push(out, "optimality_slack_max", slack_max, Bound::AtMost(1e-9));
    push(out, "zero_direction_max", zero_dir, Bound::AtMost(0.0));
    push(out, "grid_eta_error", grid_eta, Bound::AtMost(1e-6));
    push(out, "grid_ybar_error", grid_y, Bound::AtMost(1e-6));
    push(out, "lipschitz_ratio", lip, Bound::AtMost(1.0));
    Ok(())
}

// -------------------------------------------------------------- chain suite

/// A selection with its sign flipped, for fault injection.
struct Flip<S>(S, bool);

impl<S: Selection> Selection for Flip<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x)
    }
    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.0.subgradient(x);
        if self.1 {
            g.iter_mut().for_each(|v| *v = -*v);
        }
        g
    }
}

fn abs_selection(tie: f64) -> impl Selection {
    FnSelection::new(
        1,
        |x: &[f64]| x[0].abs(),
        move |x: &[f64]| {
            vec![if x[0] > 0.0 {
                1.0
            } else if x[0] < 0.0 {
                -1.0
            } else {
                tie
            }]
        },
    )
}

/// `max_i x_i`; ties go to the first index, or the last when `last` is set.
fn max_selection(dim: usize, last: bool) -> impl Selection {
    FnSelection::new(
        dim,
        |x: &[f64]| x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        move |x: &[f64]| {
            let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut hits = x.iter().enumerate().filter(|(_, v)| **v == m).map(|(i, _)| i);
            let i = if last { hits.next_back() } else { hits.next() }.expect("nonempty");
            let mut g = vec![0.0; x.len()];
            g[i] = 1.0;
            g
        },
    )
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Result<Vector> {
    Vector::new((0..dim).map(|_| unif(rng, -1.0, 1.0)).collect())
}

/// Cycles through segments, three-piece polylines and sinusoids on `[0, 1]`.
fn random_path(rng: &mut ChaCha8Rng, dim: usize, i: usize) -> Result<Path> {
    match i % 3 {
        0 => Path::segment(random_point(rng, dim)?, random_point(rng, dim)?, 1.0),
        1 => {
            let points = (0..4).map(|_| random_point(rng, dim)).collect::<Result<_>>()?;
            let times = vec![0.0, unif(rng, 0.2, 0.45), unif(rng, 0.55, 0.8), 1.0];
            Path::piecewise_linear(points, times)
        }
        _ => {
            let c: Vec<f64> = (0..dim).map(|_| unif(rng, -0.5, 0.5)).collect();
            let r: Vec<f64> = (0..dim).map(|_| unif(rng, 0.2, 1.0)).collect();
            let w: Vec<f64> = (0..dim).map(|_| unif(rng, 1.0, 6.0)).collect();
            let phi: Vec<f64> = (0..dim).map(|_| unif(rng, 0.0, std::f64::consts::TAU)).collect();
            let (c2, r2, w2, p2) = (c.clone(), r.clone(), w.clone(), phi.clone());
            Path::parametric(
                dim,
                1.0,
                move |t| (0..c.len()).map(|j| c[j] + r[j] * (w[j] * t + phi[j]).sin()).collect(),
                move |t| (0..c2.len()).map(|j| r2[j] * w2[j] * (w2[j] * t + p2[j]).cos()).collect(),
                vec![],
            )
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

const ORDER_STEPS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
const ORDER_PATHS: usize = 20;

fn chain_family<S: Selection>(
    name: &str,
    f: &S,
    paths: &[Path],
    h: f64,
    out: &mut Out,
) -> Result<()> {
    let mut worst = 0.0f64;
    let mut max_gap = 0.0f64;
    for p in paths {
        let r = chain_rule_check(f, p, h, None)?;
        max_gap = max_gap.max(r.gap);
        worst = worst.max(if r.tol > 0.0 {
            r.gap / r.tol
        } else if r.gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    let mut mean_gaps = Vec::new();
    for &step in &ORDER_STEPS {
        let used = &paths[..ORDER_PATHS.min(paths.len())];
        let mut total = 0.0;
        for p in used {
            total += chain_rule_check(f, p, step, None)?.gap;
        }
        mean_gaps.push(total / used.len() as f64);
    }
    let order = if mean_gaps.iter().all(|g| *g > 0.0) {
        log_slope(&ORDER_STEPS, &mean_gaps)
    } else {
        f64::NAN
    };
    push(out, &format!("{name}.paths"), paths.len() as f64, Bound::AtLeast(1.0));
    push(out, &format!("{name}.max_gap"), max_gap, Bound::AtMost(f64::INFINITY));
    push(out, &format!("{name}.gap_over_tol"), worst, Bound::AtMost(1.0));
    push(out, &format!("{name}.order"), order, Bound::AtLeast(0.9));
    Ok(())
}

fn small_relu_loss(rng: &mut ChaCha8Rng) -> Result<BatchLoss> {
    let arch = NetArch::new(2, 3, 1)?;
    let samples: Vec<Sample> = (0..4)
        .map(|_| Sample::new((0..3).map(|_| normal(rng)).collect(), vec![normal(rng)]))
        .collect::<Result<_>>()?;
    BatchLoss::new(arch, samples)
}

fn chain_suite(rng: &mut ChaCha8Rng, opts: &ValidateOptions, out: &mut Out) -> Result<()> {
    let fault = opts.inject_fault;
    let h = opts.h;
    let n = opts.paths.max(ORDER_PATHS);

    let abs = Flip(abs_selection(0.0), fault);
    let abs_paths = (0..n).map(|i| random_path(rng, 1, i)).collect::<Result<Vec<_>>>()?;
    chain_family("abs", &abs, &abs_paths, h, out)?;

    let max = Flip(max_selection(3, false), fault);
    let max_paths = (0..n).map(|i| random_path(rng, 3, i)).collect::<Result<Vec<_>>>()?;
    chain_family("max", &max, &max_paths, h, out)?;

    let center = random_point(rng, 5)?;
    let l1 = Flip(crate::oracle::L1Distance::new(center), fault);
    let l1_paths = (0..n).map(|i| random_path(rng, 5, i)).collect::<Result<Vec<_>>>()?;
    chain_family("l1", &l1, &l1_paths, h, out)?;

    let relu = Flip(small_relu_loss(rng)?, fault);
    let relu_paths = (0..n).map(|i| random_path(rng, relu.dim(), i)).collect::<Result<Vec<_>>>()?;
    chain_family("relu", &relu, &relu_paths, h, out)?;

    // Different tie rules must give path integrals within tolerance.
    let mut worst = 0.0f64;
    let alt = abs_selection(1.0);
    for p in &abs_paths {
        let r = chain_rule_check(&abs, p, h, None)?;
        let diff = (path_integral(&alt, p, h)? - r.rhs).abs();
        worst = worst.max(diff / r.tol.max(f64::MIN_POSITIVE));
    }
    let diagonal = Path::segment(Vector::new(vec![-1.0; 3])?, Vector::new(vec![1.0; 3])?, 1.0)?;
    let first = path_integral(&max, &diagonal, h)?;
    let last = path_integral(&max_selection(3, true), &diagonal, h)?;
    let tol = chain_rule_check(&max, &diagonal, h, None)?.tol;
    worst = worst.max((first - last).abs() / tol);
    push(out, "selection_independence", worst, Bound::AtMost(1.0));
    Ok(())
}

// ------------------------------------------------------------ compose suite

fn random_params(rng: &mut ChaCha8Rng, arch: NetArch) -> Result<NetParams> {
    let flat: Vec<f64> = (0..arch.num_params()).map(|_| unif(rng, -1.0, 1.0)).collect();
    NetParams::from_flat(arch, &flat, 10.0)
}

fn random_sample(rng: &mut ChaCha8Rng, arch: NetArch) -> Result<Sample> {
    Sample::new(
        (0..arch.width).map(|_| normal(rng)).collect(),
        (0..arch.out).map(|_| normal(rng)).collect(),
    )
}

/// A random network and sample with every pre-activation at least `1e-3`
/// away from zero.
fn differentiable_point(rng: &mut ChaCha8Rng, arch: NetArch) -> Result<(NetParams, Sample)> {
    loop {
        let p = random_params(rng, arch)?;
        let s = random_sample(rng, arch)?;
        let tr = forward(&s, &p)?;
        if tr.preacts.iter().flatten().all(|v| v.abs() > 1e-3) {
            return Ok((p, s));
        }
    }
}

fn flip(mut g: Vec<f64>, fault: bool) -> Vec<f64> {
    if fault {
        g.iter_mut().for_each(|v| *v = -*v);
    }
    g
}

/// `½|y(x, W) - Y|²` straight from the recursion, independent of the
/// library's forward pass.
fn plain_loss(arch: NetArch, w: &[f64], s: &Sample) -> f64 {
    let n = arch.width;
    let mut act = s.features.to_vec();
    let mut off = 0;
    for _ in 0..arch.depth - 1 {
        let next: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| w[off + i * n + j] * act[j]).sum::<f64>().max(0.0))
            .collect();
        off += n * n;
        act = next;
    }
    (0..arch.out)
        .map(|i| {
            let y: f64 = (0..n).map(|j| w[off + i * n + j] * act[j]).sum();
            0.5 * (y - s.target[i]).powi(2)
        })
        .sum()
}

fn compose_suite(rng: &mut ChaCha8Rng, opts: &ValidateOptions, out: &mut Out) -> Result<()> {
    let fault = opts.inject_fault;
    let eps = 1e-6;

    let mut fd_err = 0.0f64;
    for _ in 0..opts.fd_points {
        let arch = NetArch::new(rng.random_range(1..=3), rng.random_range(2..=4), rng.random_range(1..=2))?;
        let (p, s) = differentiable_point(rng, arch)?;
        let g = flip(sample_subgrad(&s, &p)?.into_vec(), fault);
        let mut w = p.flatten().into_vec();
        let mut fd = vec![0.0; w.len()];
        for i in 0..w.len() {
            let w0 = w[i];
            w[i] = w0 + eps;
            let up = plain_loss(arch, &w, &s);
            w[i] = w0 - eps;
            let down = plain_loss(arch, &w, &s);
            w[i] = w0;
            fd[i] = (up - down) / (2.0 * eps);
        }
        let scale = norm(&fd).max(norm(&g)).max(1e-12);
        fd_err = fd_err.max(dist(&g, &fd) / scale);
    }
    push(out, "finite_difference_rel_error", fd_err, Bound::AtMost(1e-5));

    let mut closed = 0.0f64;
    let mut assembled = 0.0f64;
    for _ in 0..opts.fd_points {
        let n = rng.random_range(2..=6);
        let arch = NetArch::new(2, n, 1)?;
        let p = random_params(rng, arch)?;
        let s = random_sample(rng, arch)?;
        let g = flip(sample_subgrad(&s, &p)?.into_vec(), fault);
        let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let cf = two_layer_closed_form(&s, &p)?;
        closed = closed.max(dist_inf(&cf, &g) / scale);

        // y(W) = W_2 (W_1 x)_+ as the inner map of ½(u - Y)².
        let x = s.features.to_vec();
        let x2 = x.clone();
        let target = s.target[0];
        let inner = FnSelection::new(
            arch.num_params(),
            move |w: &[f64]| {
                (0..n)
                    .map(|i| w[n * n + i] * (0..n).map(|j| w[i * n + j] * x[j]).sum::<f64>().max(0.0))
                    .sum()
            },
            move |w: &[f64]| {
                let mut d = vec![0.0; n * n + n];
                for i in 0..n {
                    let pre: f64 = (0..n).map(|j| w[i * n + j] * x2[j]).sum();
                    if pre > 0.0 {
                        for j in 0..n {
                            d[i * n + j] = w[n * n + i] * x2[j];
                        }
                    }
                    d[n * n + i] = pre.max(0.0);
                }
                d
            },
        );
        let outer = FnSelection::new(
            1,
            move |u: &[f64]| 0.5 * (u[0] - target).powi(2),
            move |u: &[f64]| vec![u[0] - target],
        );
        let comp = compose_subgrad(outer, vec![inner])?;
        let a = comp.subgradient(&p.flatten());
        assembled = assembled.max(dist_inf(&a, &g) / scale);
    }
    push(out, "closed_form_error", closed, Bound::AtMost(1e-12));
    push(out, "composition_error", assembled, Bound::AtMost(1e-12));
    Ok(())
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

// ----------------------------------------------------------- dynamics suite

const FLOW_A: f64 = 0.5;
const FLOW_BETA: f64 = 1.0;
const FLOW_T: f64 = 10.0;
const FLOW_STEPS: [f64; 5] = [2e-2, 1e-2, 5e-3, 2.5e-3, 1.25e-3];
const TRACK_T: f64 = 5.0;
const TRACK_TAUS: [f64; 5] = [4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3];
/// Reference step for tracking: `TRACK_TAUS[4] / 32`.
const TRACK_REF: f64 = 2.5e-3 / 32.0;

/// Fitted order of `values` against `steps`. A sequence that drops to zero
/// and stays there counts as arbitrarily fast; one that reappears after
/// vanishing fails.
fn ladder_order(steps: &[f64], values: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-14;
    let positive = values.iter().take_while(|v| **v > FLOOR).count();
    if values[positive..].iter().any(|v| *v > FLOOR) {
        return f64::NEG_INFINITY;
    }
    if positive < values.len() || positive < 2 {
        return f64::INFINITY;
    }
    log_slope(steps, values)
}

fn dynamics_problem<S: Selection>(
    name: &str,
    f: &S,
    set: &BoxConstraint,
    x0: &Vector,
    out: &mut Out,
) -> Result<()> {
    let params = FlowParams::new(FLOW_A, FLOW_BETA)?;
    let z0 = Vector::new(f.subgradient(x0))?;
    let mut viol = Vec::new();
    for &h in &FLOW_STEPS {
        let run = integrate(x0, &z0, f, params, set, FLOW_T, h)?;
        viol.push(run.max_violation());
    }
    let per_h = viol.iter().zip(&FLOW_STEPS).fold(0.0f64, |m, (v, h)| m.max(v / h));
    let order = ladder_order(&FLOW_STEPS, &viol);
    push(out, &format!("{name}.violation_over_h"), per_h, Bound::AtMost(10.0));
    push(out, &format!("{name}.violation_order"), order, Bound::AtLeast(0.9));

    // Noise-free method with constant tau against a fine-step flow.
    let reference = integrate(x0, &z0, f, params, set, TRACK_T, TRACK_REF)?;
    let mut gaps = Vec::new();
    for &tau in &TRACK_TAUS {
        let algo = AlgoParams::new(FLOW_A, FLOW_BETA, StepLaw::constant(tau), 0)?;
        let iters = (TRACK_T / tau).round() as u64;
        let stride = (tau / TRACK_REF).round() as usize;
        let mut oracle = Exact(f);
        let mut worst = 0.0f64;
        run(
            Method::Ssam,
            &mut oracle,
            &algo,
            set,
            x0,
            iters,
            &RunOptions::default(),
            |_, state| {
                let r = &reference.states[state.k as usize * stride];
                worst = worst.max(dist(&state.x, &r.x));
            },
        )?;
        gaps.push(worst);
    }
    let order = ladder_order(&TRACK_TAUS, &gaps);
    push(out, &format!("{name}.tracking_gap"), gaps[0], Bound::AtMost(f64::INFINITY));
    push(out, &format!("{name}.tracking_order"), order, Bound::AtLeast(0.9));
    Ok(())
}

fn dynamics_suite(opts: &ValidateOptions, out: &mut Out) -> Result<()> {
    let q = problems::quadratic(10, 1.0)?;
    dynamics_problem("quadratic", &q.objective, &q.set, &q.start, out)?;

    let l = problems::l1(10, 1.0)?;
    dynamics_problem("l1", &l.objective, &l.set, &l.start, out)?;

    let arch = NetArch::new(2, 4, 1)?;
    let teacher = synth_teacher(arch, 64, 0.1, 10.0, opts.seed)?;
    let loss = BatchLoss::new(arch, teacher.dataset.samples.clone())?;
    let mut rng = rng_stream(opts.seed, streams::INIT);
    let init = NetParams::init_uniform(arch, 10.0, &mut rng)?;
    dynamics_problem("relu", &loss, &init.weight_box(), &init.flatten(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(suite: Suite) -> ValidateOptions {
        ValidateOptions {
            suites: vec![suite],
            gap_instances: 500,
            paths: 20,
            fd_points: 50,
            ..ValidateOptions::default()
        }
    }

    #[test]
    fn brute_force_finds_clamped_minimiser() {
        let (v, y) = brute_gap(&[0.5], &[1.0], 2.0, &[0.0], &[1.0]);
        assert!((v + 0.25).abs() < 1e-12);
        assert!(y[0].abs() < 1e-12);
    }

    #[test]
    fn ladder_order_handles_zeros() {
        let h = [4.0, 2.0, 1.0];
        assert!((ladder_order(&h, &[4.0, 2.0, 1.0]) - 1.0).abs() < 1e-12);
        assert_eq!(ladder_order(&h, &[1e-6, 0.0, 0.0]), f64::INFINITY);
        assert_eq!(ladder_order(&h, &[0.0, 1e-6, 0.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn log_slope_of_power_law() {
        let x = [1.0, 2.0, 4.0];
        let y = [3.0, 12.0, 48.0];
        assert!((log_slope(&x, &y) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gap_suite_passes() {
        let r = validate(&quick(Suite::Gap)).unwrap();
        assert!(r.all_pass(), "{}", r.render());
    }

    #[test]
    fn compose_suite_passes_and_detects_fault() {
        let r = validate(&quick(Suite::Compose)).unwrap();
        assert!(r.all_pass(), "{}", r.render());
        let bad = validate(&ValidateOptions {
            inject_fault: true,
            ..quick(Suite::Compose)
        })
        .unwrap();
        assert!(!bad.all_pass());
    }

    #[test]
    fn render_lists_every_check() {
        let r = validate(&quick(Suite::Gap)).unwrap();
        let text = r.render();
        for c in &r.checks {
            assert!(text.contains(&format!("{}.pass = true", c.key())));
        }
        assert!(text.ends_with("all.pass = true\n"));
    }

    #[test]
    fn rejects_bad_step() {
        let opts = ValidateOptions {
            h: 0.5,
            ..ValidateOptions::default()
        };
        assert!(matches!(validate(&opts), Err(Error::Usage(_))));
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("all".parse::<Suite>().is_err());
    }
}
