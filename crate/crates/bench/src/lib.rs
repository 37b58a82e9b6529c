//! Deterministic fixtures shared by the criterion benches and their tests.

use rand::Rng;
use ssam_core::data::ExperimentConfig;
use ssam_core::experiment::Problem;
use ssam_core::oracle::{rng_stream, streams};
use ssam_core::relu::{NetArch, NetParams, Sample};
use ssam_core::{AlgoParams, BoxConstraint, Oracle, Result, Vector};

/// A ReLU training problem at the desk-scale shape used by `compare`.
pub struct ReluFixture {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub params: AlgoParams,
}

impl ReluFixture {
    pub fn new(arch: NetArch, samples: usize, batch: usize) -> Result<Self> {
        let config = ExperimentConfig {
            arch,
            samples,
            batch,
            eval_size: samples.min(64),
            ..ExperimentConfig::default()
        };
        let problem = Problem::build(&config)?;
        let params = config.algo_params()?;
        Ok(ReluFixture {
            config,
            problem,
            params,
        })
    }

    pub fn oracle(&self) -> Result<Box<dyn Oracle + Send>> {
        self.problem.oracle(&self.config)
    }
}

/// Random `(x, z)` pairs in a box of half-width 1 for gap evaluations.
pub struct GapFixture {
    pub set: BoxConstraint,
    pub points: Vec<(Vector, Vector)>,
    pub beta: f64,
}

impl GapFixture {
    pub fn new(dim: usize, count: usize, seed: u64) -> Result<Self> {
        let set = BoxConstraint::symmetric(dim, 1.0)?;
        let mut rng = rng_stream(seed, streams::DATA);
        let mut points = Vec::with_capacity(count);
        for _ in 0..count {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..=3.0)).collect();
            points.push((Vector::new(x)?, Vector::new(z)?));
        }
        Ok(GapFixture { set, points, beta: 1.0 })
    }
}

/// One sample and one parameter set for a single forward/backward pass.
pub fn net_fixture(arch: NetArch, seed: u64) -> Result<(Sample, NetParams)> {
    let mut rng = rng_stream(seed, streams::INIT);
    let params = NetParams::init_uniform(arch, 10.0, &mut rng)?;
    let x: Vec<f64> = (0..arch.width).map(|_| rng.random_range(-2.0..=2.0)).collect();
    let y: Vec<f64> = (0..arch.out).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok((Sample::new(x, y)?, params))
}
