//! Experiment assembly: turns an [`ExperimentConfig`] into a problem, runs
//! one or both methods on it, and summarises the resulting traces.

use std::sync::Arc;

use rand::seq::index;

use crate::data::{self, DataSource, Dataset, ExperimentConfig, OracleKind, TargetSpec};
use crate::dynamics::{self, FlowParams, Integration};
use crate::error::{Error, Result};
use crate::feasible::BoxConstraint;
use crate::linalg::Vector;
use crate::optimizer::{self, Method, RunOptions, RunOutcome, Trace};
use crate::oracle::{rng_stream, streams, with_noise, Exact, NoiseSpec, Oracle, Selection};
use crate::problems;
use crate::relu::{BatchLoss, LossMonitor, NetParams, ReluOracle, Sample};

enum Kind {
    Convex(Arc<dyn Selection + Send + Sync>),
    Relu {
        train: Arc<[Sample]>,
        eval: Arc<[Sample]>,
        loss: Arc<BatchLoss>,
    },
}

/// Everything a run needs besides the oracle's random state.
pub struct Problem {
    kind: Kind,
    pub set: BoxConstraint,
    pub start: Vector,
    /// Known solution of the convex test problems.
    pub reference: Option<Vector>,
    /// Loss of the generating network on synthetic data.
    pub teacher_floor: Option<f64>,
}

/// Loads or synthesises the training data named by `cfg`.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let data = match &cfg.data {
        DataSource::Synthetic => {
            data::synth_teacher(cfg.arch, cfg.samples, cfg.teacher_noise, cfg.box_half_width, cfg.seed)?.dataset
        }
        DataSource::Csv(path) => {
            let d = data::load_csv(path, cfg.delimiter as u8, &TargetSpec::Last(cfg.arch.out))?;
            if d.n != cfg.arch.width {
                return Err(Error::data(format!(
                    "{} has {} feature columns but the architecture expects {}",
                    path.display(),
                    d.n,
                    cfg.arch.width
                )));
            }
            d
        }
    };
    if data.is_empty() {
        return Err(Error::data("dataset has no rows"));
    }
    if cfg.standardize {
        data::standardize(&data)
    } else {
        Ok(data)
    }
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        match cfg.oracle {
            OracleKind::Quadratic => {
                let p = problems::quadratic(cfg.dim, cfg.box_half_width)?;
                Ok(Problem {
                    kind: Kind::Convex(Arc::new(p.objective)),
                    set: p.set,
                    start: p.start,
                    reference: Some(p.solution),
                    teacher_floor: None,
                })
            }
            OracleKind::L1 => {
                let p = problems::l1(cfg.dim, cfg.box_half_width)?;
                Ok(Problem {
                    kind: Kind::Convex(Arc::new(p.objective)),
                    set: p.set,
                    start: p.start,
                    reference: Some(p.solution),
                    teacher_floor: None,
                })
            }
            OracleKind::Relu => {
                let data = load_dataset(cfg)?;
                let train = data.samples.clone();
                let len = train.len();
                let mut rng = rng_stream(cfg.seed, streams::VALIDATION);
                let mut picks = index::sample(&mut rng, len, cfg.eval_size.min(len)).into_vec();
                picks.sort_unstable();
                let eval: Arc<[Sample]> = picks.iter().map(|&i| train[i].clone()).collect();
                let loss = Arc::new(BatchLoss::new(cfg.arch, eval.clone())?);
                let mut rng = rng_stream(cfg.seed, streams::INIT);
                let init = NetParams::init_uniform(cfg.arch, cfg.box_half_width, &mut rng)?;
                Ok(Problem {
                    set: init.weight_box(),
                    start: init.flatten(),
                    kind: Kind::Relu { train, eval, loss },
                    reference: None,
                    teacher_floor: data.teacher_floor,
                })
            }
        }
    }

    /// The deterministic objective: the test function, or the mean loss over
    /// the fixed evaluation set for the network.
    pub fn objective(&self) -> &(dyn Selection + Send + Sync) {
        match &self.kind {
            Kind::Convex(s) => s.as_ref(),
            Kind::Relu { loss, .. } => loss.as_ref(),
        }
    }

    /// A fresh oracle seeded from `cfg`. Two oracles made from the same
    /// config produce the same observation sequence for the same queries.
    pub fn oracle(&self, cfg: &ExperimentConfig) -> Result<Box<dyn Oracle + Send>> {
        let noise = NoiseSpec {
            sigma_e: cfg.noise,
            delta0: cfg.delta0,
            rho: 1.0,
        };
        Ok(match &self.kind {
            Kind::Convex(s) => Box::new(with_noise(Exact(s.clone()), noise, cfg.seed)?),
            Kind::Relu { train, eval, .. } => {
                let base = ReluOracle::new(cfg.arch, train.clone(), cfg.batch, cfg.seed)?
                    .with_monitor(LossMonitor::Fixed(eval.clone()));
                Box::new(with_noise(base, noise, cfg.seed)?)
            }
        })
    }

    fn run_options(&self, cfg: &ExperimentConfig) -> RunOptions {
        RunOptions {
            early_stop: None,
            reference: self.reference.clone(),
            hull_bound: match cfg.oracle {
                OracleKind::L1 => Some(1.0),
                _ => None,
            },
        }
    }

    /// Runs `cfg.method` for `cfg.iters` steps.
    pub fn run(&self, cfg: &ExperimentConfig) -> Result<RunOutcome> {
        let params = cfg.algo_params()?;
        let mut oracle = self.oracle(cfg)?;
        optimizer::run(
            cfg.method,
            &mut oracle,
            &params,
            &self.set,
            &self.start,
            cfg.iters,
            &self.run_options(cfg),
            |_, _| {},
        )
    }

    /// Integrates the limiting flow from the starting point with `z0 = g(x0)`.
    pub fn simulate(&self, cfg: &ExperimentConfig) -> Result<Integration> {
        let f = self.objective();
        let z0 = Vector::new(f.subgradient(&self.start))?;
        let params = FlowParams::new(cfg.a, cfg.beta)?;
        dynamics::integrate(&self.start, &z0, f, params, &self.set, cfg.flow_horizon, cfg.flow_step)
    }
}

impl Selection for Arc<dyn Selection + Send + Sync> {
    fn dim(&self) -> usize {
        self.as_ref().dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.as_ref().value(x)
    }
    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.as_ref().subgradient(x)
    }
    fn exact_minimizer(&self, set: &BoxConstraint) -> Result<Option<Vector>> {
        self.as_ref().exact_minimizer(set)
    }
}

/// Builds the problem named by `cfg` and runs it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    Problem::build(cfg)?.run(cfg)
}

/// Scalar digest of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub config_hash: String,
    pub iters: usize,
    /// Loss recorded at the starting point.
    pub initial_loss: f64,
    /// Mean loss over the last 1% of rows.
    pub final_loss: f64,
    /// Population standard deviation of the loss over the last 10% of rows.
    pub tail_std: f64,
    pub final_eta: f64,
    pub final_residual: f64,
    pub final_dist: Option<f64>,
}

fn tail(rows: usize, fraction: f64) -> usize {
    ((rows as f64 * fraction).ceil() as usize).clamp(1, rows.max(1))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn summarize(trace: &Trace, cfg: &ExperimentConfig) -> Result<MethodSummary> {
    let rows = &trace.rows;
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::usage("cannot summarise an empty trace")),
    };
    let losses: Vec<f64> = trace.losses().collect();
    let (final_loss, _) = mean_std(&losses[losses.len() - tail(losses.len(), 0.01)..]);
    let (_, tail_std) = mean_std(&losses[losses.len() - tail(losses.len(), 0.1)..]);
    Ok(MethodSummary {
        method: cfg.method,
        config_hash: cfg.hash(),
        iters: rows.len(),
        initial_loss: first.loss,
        final_loss,
        tail_std,
        final_eta: last.eta,
        final_residual: last.residual,
        final_dist: last.dist,
    })
}

impl MethodSummary {
    pub fn render(&self) -> String {
        let p = self.method;
        let mut s = format!(
            "{p}.config_hash = {}\n{p}.iters = {}\n{p}.initial_loss = {}\n{p}.final_loss = {}\n\
             {p}.tail_std = {}\n{p}.final_eta = {}\n{p}.final_residual = {}\n",
            self.config_hash,
            self.iters,
            self.initial_loss,
            self.final_loss,
            self.tail_std,
            self.final_eta,
            self.final_residual,
        );
        if let Some(d) = self.final_dist {
            s.push_str(&format!("{p}.final_dist = {d}\n"));
        }
        s
    }
}

/// Both methods on the same problem, seed and schedule.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub ssam_config: ExperimentConfig,
    pub sgd_config: ExperimentConfig,
    pub ssam: RunOutcome,
    pub sgd: RunOutcome,
    pub ssam_summary: MethodSummary,
    pub sgd_summary: MethodSummary,
    pub teacher_floor: Option<f64>,
}

impl Comparison {
    pub fn render_summary(&self) -> String {
        let mut s = self.ssam_summary.render();
        s.push_str(&self.sgd_summary.render());
        if let Some(f) = self.teacher_floor {
            s.push_str(&format!("teacher_floor = {f}\n"));
        }
        s.push_str(&format!(
            "tail_std_ratio = {}\n",
            self.ssam_summary.tail_std / self.sgd_summary.tail_std
        ));
        s
    }
}

/// Runs the averaged method and the baseline concurrently. Apart from the
/// method, both use `cfg` unchanged.
pub fn compare(cfg: &ExperimentConfig) -> Result<Comparison> {
    let problem = Problem::build(cfg)?;
    let ssam_config = ExperimentConfig {
        method: Method::Ssam,
        ..cfg.clone()
    };
    let sgd_config = ExperimentConfig {
        method: Method::Sgd,
        ..cfg.clone()
    };
    let (ssam, sgd) = std::thread::scope(|s| {
        let a = s.spawn(|| problem.run(&ssam_config));
        let b = s.spawn(|| problem.run(&sgd_config));
        (
            a.join().expect("ssam run panicked"),
            b.join().expect("sgd run panicked"),
        )
    });
    let (ssam, sgd) = (ssam?, sgd?);
    Ok(Comparison {
        ssam_summary: summarize(&ssam.trace, &ssam_config)?,
        sgd_summary: summarize(&sgd.trace, &sgd_config)?,
        ssam_config,
        sgd_config,
        ssam,
        sgd,
        teacher_floor: problem.teacher_floor,
    })
}
