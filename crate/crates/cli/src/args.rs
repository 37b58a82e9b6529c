use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use ssam_core::data::ExperimentConfig;
use ssam_core::Result;

/// Stochastic subgradient method with subgradient averaging: experiments,
/// comparisons and validation suites.
///
/// Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 failed
/// validation check.
#[derive(Debug, Parser)]
#[command(name = "ssam", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method and write its trace plus the resolved config.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Trace file; the config is written next to it with extension `.config`.
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
    },
    /// Run both methods with identical seed, data order and stepsizes.
    Compare {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output directory for ssam.csv, sgd.csv, their configs and summary.txt.
        #[arg(long, default_value = "compare")]
        out: PathBuf,
    },
    /// Run the validation suites; exit code 3 if any check fails.
    Validate {
        /// Suites to run: gap, chain, compose, dynamics or all. Repeatable or comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        suite: Vec<String>,
        /// Quadrature step for the chain-rule checks; tolerances scale with it.
        #[arg(long = "h", default_value_t = 1e-4)]
        h: f64,
        /// Random paths per function family in the chain suite.
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Flip the sign of the test selections; the chain and compose suites must fail.
        #[arg(long)]
        inject_fault: bool,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the limiting flow and write a Lyapunov trace.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Flow horizon [default: 50].
        #[arg(long = "T", value_name = "T")]
        horizon_t: Option<String>,
        /// Euler step [default: 1e-3].
        #[arg(long = "h", value_name = "H")]
        step_h: Option<String>,
        #[arg(long, default_value = "flow.csv")]
        out: PathBuf,
    },
    /// Write a synthetic teacher dataset as delimited text.
    Datagen {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "synthetic.csv")]
        out: PathBuf,
    },
}

/// Experiment settings. Flags override values from `--config`, which
/// override the built-in defaults shown here.
#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ssam (averaged) or sgd (plain projected) [default: ssam].
    #[arg(long)]
    pub method: Option<String>,
    /// quadratic, l1 or relu [default: relu].
    #[arg(long)]
    pub oracle: Option<String>,
    /// `synthetic` or a delimited file whose last m columns are targets [default: synthetic].
    #[arg(long)]
    pub data: Option<String>,
    /// Field delimiter of --data; `tab` for tabs [default: ;].
    #[arg(long)]
    pub delimiter: Option<String>,
    /// Standardize features before training [default: true].
    #[arg(long)]
    pub standardize: Option<String>,
    /// Network shape L,n,m [default: 2,10,1].
    #[arg(long)]
    pub arch: Option<String>,
    /// Averaging rate a [default: 0.1].
    #[arg(long = "a", value_name = "A")]
    pub a: Option<String>,
    /// Prox coefficient beta [default: 5].
    #[arg(long)]
    pub beta: Option<String>,
    /// Initial stepsize [default: 0.03].
    #[arg(long)]
    pub tau0: Option<String>,
    /// harmonic: tau0/(1 + rate k/horizon); constant: tau0 [default: harmonic].
    #[arg(long)]
    pub schedule: Option<String>,
    /// Decay rate of the harmonic schedule [default: 5].
    #[arg(long)]
    pub rate: Option<String>,
    /// Horizon N of the harmonic schedule [default: --iters].
    #[arg(long)]
    pub horizon: Option<String>,
    /// Iteration budget [default: 50000].
    #[arg(long)]
    pub iters: Option<String>,
    /// Master seed for data, initialisation and noise [default: 0].
    #[arg(long)]
    pub seed: Option<String>,
    /// Half-width of the feasible box [default: 10].
    #[arg(long = "box", value_name = "BOX")]
    pub box_half_width: Option<String>,
    /// Minibatch size [default: 1].
    #[arg(long)]
    pub batch: Option<String>,
    /// Dimension of the quadratic and l1 problems [default: 10].
    #[arg(long)]
    pub dim: Option<String>,
    /// Std of the i.i.d. Gaussian observation noise [default: 0].
    #[arg(long)]
    pub noise: Option<String>,
    /// Magnitude of the vanishing bias delta0/(1+k) [default: 0].
    #[arg(long)]
    pub delta0: Option<String>,
    /// Rows of synthetic data [default: 2000].
    #[arg(long)]
    pub samples: Option<String>,
    /// Label noise std of the synthetic teacher [default: 0.5].
    #[arg(long)]
    pub teacher_noise: Option<String>,
    /// Rows in the fixed set whose mean loss the ReLU traces record [default: 256].
    #[arg(long)]
    pub eval_size: Option<String>,
}

impl ExperimentArgs {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("method", &self.method),
            ("oracle", &self.oracle),
            ("data", &self.data),
            ("delimiter", &self.delimiter),
            ("standardize", &self.standardize),
            ("arch", &self.arch),
            ("a", &self.a),
            ("beta", &self.beta),
            ("tau0", &self.tau0),
            ("schedule", &self.schedule),
            ("rate", &self.rate),
            ("horizon", &self.horizon),
            ("iters", &self.iters),
            ("seed", &self.seed),
            ("box", &self.box_half_width),
            ("batch", &self.batch),
            ("dim", &self.dim),
            ("noise", &self.noise),
            ("delta0", &self.delta0),
            ("samples", &self.samples),
            ("teacher_noise", &self.teacher_noise),
            ("eval_size", &self.eval_size),
        ]
    }

    /// Defaults, then the config file, then flags. The schedule horizon
    /// follows the iteration budget unless set explicitly.
    pub fn resolve(&self, extra: &[(&str, &Option<String>)]) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        let mut explicit = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| ssam_core::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            explicit = cfg.merge_text(&text)?;
        }
        for (key, value) in self.pairs().into_iter().chain(extra.iter().copied()) {
            if let Some(v) = value {
                cfg.set(key, v)
                    .map_err(|e| ssam_core::Error::Usage(format!("--{key}: {e}")))?;
                explicit.push(key.to_owned());
            }
        }
        if !explicit.iter().any(|k| k == "horizon") {
            cfg.horizon = cfg.iters;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
