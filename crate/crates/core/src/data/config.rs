//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys missing from a
//! file keep their defaults; unknown or repeated keys are errors. Reals are
//! rendered in the shortest form that parses back to the same bits.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optimizer::Method;
use crate::relu::{NetArch, DEFAULT_HALF_WIDTH};
use crate::schedule::{AlgoParams, StepLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Quadratic,
    L1,
    Relu,
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleKind::Quadratic => "quadratic",
            OracleKind::L1 => "l1",
            OracleKind::Relu => "relu",
        })
    }
}

impl FromStr for OracleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(OracleKind::Quadratic),
            "l1" => Ok(OracleKind::L1),
            "relu" => Ok(OracleKind::Relu),
            _ => Err(Error::usage(format!("unknown oracle '{s}' (quadratic, l1, relu)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `tau0 / (1 + rate k / horizon)`
    Harmonic,
    Constant,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Harmonic => "harmonic",
            ScheduleKind::Constant => "constant",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(ScheduleKind::Harmonic),
            "constant" => Ok(ScheduleKind::Constant),
            _ => Err(Error::usage(format!("unknown schedule '{s}' (harmonic, constant)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    /// Data drawn from a random teacher network.
    Synthetic,
    Csv(PathBuf),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic => f.write_str("synthetic"),
            DataSource::Csv(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub oracle: OracleKind,
    pub data: DataSource,
    pub delimiter: char,
    pub standardize: bool,
    pub arch: NetArch,
    pub a: f64,
    pub beta: f64,
    pub tau0: f64,
    pub schedule: ScheduleKind,
    pub rate: f64,
    pub horizon: u64,
    pub iters: u64,
    pub seed: u64,
    /// Half-width of the feasible box.
    pub box_half_width: f64,
    pub batch: usize,
    /// Dimension of the quadratic and l1 test problems.
    pub dim: usize,
    pub noise: f64,
    pub delta0: f64,
    pub samples: usize,
    pub teacher_noise: f64,
    /// Size of the fixed evaluation set whose mean loss the ReLU traces record.
    pub eval_size: usize,
    /// Flow horizon for `simulate`.
    pub flow_horizon: f64,
    /// Flow step for `simulate`.
    pub flow_step: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Ssam,
            oracle: OracleKind::Relu,
            data: DataSource::Synthetic,
            delimiter: ';',
            standardize: true,
            arch: NetArch {
                depth: 2,
                width: 10,
                out: 1,
            },
            a: 0.1,
            beta: 5.0,
            tau0: 0.03,
            schedule: ScheduleKind::Harmonic,
            rate: 5.0,
            horizon: 50_000,
            iters: 50_000,
            seed: 0,
            box_half_width: DEFAULT_HALF_WIDTH,
            batch: 1,
            dim: 10,
            noise: 0.0,
            delta0: 0.0,
            samples: 2000,
            teacher_noise: 0.5,
            eval_size: 256,
            flow_horizon: 50.0,
            flow_step: 1e-3,
        }
    }
}

/// Keys in rendering order.
pub const CONFIG_KEYS: &[&str] = &[
    "method",
    "oracle",
    "data",
    "delimiter",
    "standardize",
    "arch",
    "a",
    "beta",
    "tau0",
    "schedule",
    "rate",
    "horizon",
    "iters",
    "seed",
    "box",
    "batch",
    "dim",
    "noise",
    "delta0",
    "samples",
    "teacher_noise",
    "eval_size",
    "T",
    "h",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::usage(format!("config key '{key}': cannot parse '{value}'")))
}

fn parse_arch(value: &str) -> Result<NetArch> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::usage(format!("arch must be L,n,m, got '{value}'")));
    }
    let n: Vec<usize> = parts.iter().map(|p| parse_num("arch", p)).collect::<Result<_>>()?;
    NetArch::new(n[0], n[1], n[2])
}

impl ExperimentConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "method" => self.method = value.parse()?,
            "oracle" => self.oracle = value.parse()?,
            "data" => {
                self.data = match value {
                    "synthetic" => DataSource::Synthetic,
                    "" => return Err(Error::usage("config key 'data' is empty")),
                    path => DataSource::Csv(PathBuf::from(path)),
                }
            }
            "delimiter" => {
                let mut chars = value.chars();
                self.delimiter = match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_ascii() => c,
                    _ if value == "tab" => '\t',
                    _ => return Err(Error::usage(format!("delimiter must be one ASCII character, got '{value}'"))),
                }
            }
            "standardize" => self.standardize = parse_num(key, value)?,
            "arch" => self.arch = parse_arch(value)?,
            "a" => self.a = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "tau0" => self.tau0 = parse_num(key, value)?,
            "schedule" => self.schedule = value.parse()?,
            "rate" => self.rate = parse_num(key, value)?,
            "horizon" => self.horizon = parse_num(key, value)?,
            "iters" => self.iters = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "box" => self.box_half_width = parse_num(key, value)?,
            "batch" => self.batch = parse_num(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "noise" => self.noise = parse_num(key, value)?,
            "delta0" => self.delta0 = parse_num(key, value)?,
            "samples" => self.samples = parse_num(key, value)?,
            "teacher_noise" => self.teacher_noise = parse_num(key, value)?,
            "eval_size" => self.eval_size = parse_num(key, value)?,
            "T" => self.flow_horizon = parse_num(key, value)?,
            "h" => self.flow_step = parse_num(key, value)?,
            _ => return Err(Error::usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "method" => self.method.to_string(),
            "oracle" => self.oracle.to_string(),
            "data" => self.data.to_string(),
            "delimiter" => match self.delimiter {
                '\t' => "tab".into(),
                c => c.to_string(),
            },
            "standardize" => self.standardize.to_string(),
            "arch" => self.arch.to_string(),
            "a" => self.a.to_string(),
            "beta" => self.beta.to_string(),
            "tau0" => self.tau0.to_string(),
            "schedule" => self.schedule.to_string(),
            "rate" => self.rate.to_string(),
            "horizon" => self.horizon.to_string(),
            "iters" => self.iters.to_string(),
            "seed" => self.seed.to_string(),
            "box" => self.box_half_width.to_string(),
            "batch" => self.batch.to_string(),
            "dim" => self.dim.to_string(),
            "noise" => self.noise.to_string(),
            "delta0" => self.delta0.to_string(),
            "samples" => self.samples.to_string(),
            "teacher_noise" => self.teacher_noise.to_string(),
            "eval_size" => self.eval_size.to_string(),
            "T" => self.flow_horizon.to_string(),
            "h" => self.flow_step.to_string(),
            _ => unreachable!("key list and accessor out of sync"),
        }
    }

    /// Applies a config file body on top of `self` and returns the keys it set.
    pub fn merge_text(&mut self, text: &str) -> Result<Vec<String>> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("config line {}: expected 'key = value'", i + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_owned()) {
                return Err(Error::usage(format!("config line {}: key '{key}' repeated", i + 1)));
            }
            self.set(key, value)
                .map_err(|e| Error::usage(format!("config line {}: {e}", i + 1)))?;
        }
        let mut keys: Vec<String> = seen.into_iter().collect();
        keys.sort();
        Ok(keys)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.merge_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn render(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k)))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of the rendered config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::usage(format!("{name} must be positive, got {v}")))
            }
        };
        positive("a", self.a)?;
        positive("beta", self.beta)?;
        positive("tau0", self.tau0)?;
        positive("rate", self.rate)?;
        positive("box", self.box_half_width)?;
        positive("T", self.flow_horizon)?;
        positive("h", self.flow_step)?;
        for (name, v) in [("noise", self.noise), ("delta0", self.delta0), ("teacher_noise", self.teacher_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::usage(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [
            ("iters", self.iters as usize),
            ("horizon", self.horizon as usize),
            ("batch", self.batch),
            ("dim", self.dim),
            ("samples", self.samples),
            ("eval_size", self.eval_size),
        ] {
            if v == 0 {
                return Err(Error::usage(format!("{name} must be at least 1")));
            }
        }
        if self.flow_step > self.flow_horizon {
            return Err(Error::usage("flow step h exceeds the horizon T"));
        }
        self.algo_params().map(|_| ())
    }

    pub fn step_law(&self) -> StepLaw {
        match self.schedule {
            ScheduleKind::Harmonic => StepLaw::Harmonic {
                tau0: self.tau0,
                horizon: self.horizon as f64,
                rate: self.rate,
            },
            ScheduleKind::Constant => StepLaw::constant(self.tau0),
        }
    }

    pub fn algo_params(&self) -> Result<AlgoParams> {
        AlgoParams::new(self.a, self.beta, self.step_law(), self.seed)
    }
}
