use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::oracle::{rng_stream, streams};
use crate::relu::{self, NetArch, NetParams, Sample};

/// Per-feature affine map applied by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero for constant features.
    pub std: Vec<f64>,
}

impl Normalization {
    /// Divisor actually used: the std, or one for constant features.
    pub fn scale(&self, i: usize) -> f64 {
        if self.std[i] > 0.0 {
            self.std[i]
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Arc<[Sample]>,
    /// Feature dimension.
    pub n: usize,
    /// Target dimension.
    pub m: usize,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub normalization: Option<Normalization>,
    /// Mean loss of the generating network, for synthetic data.
    pub teacher_floor: Option<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Which columns hold the targets.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Names(Vec<String>),
    /// The last `count` columns.
    Last(usize),
}

impl TargetSpec {
    /// The wine-quality layout: a single `quality` column.
    pub fn wine() -> Self {
        TargetSpec::Names(vec!["quality".into()])
    }
}

/// Loads a delimited file with a header row. Every non-target column is a
/// numeric feature.
pub fn load_csv(path: impl AsRef<Path>, delimiter: u8, target: &TargetSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let ctx = |msg: String| Error::data(format!("{}: {msg}", path.display()));

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ctx(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.len() < 2 {
        let other = b",;\t"
            .iter()
            .copied()
            .filter(|d| *d != delimiter)
            .find(|d| headers.first().is_some_and(|h| h.contains(*d as char)));
        let hint = match other {
            Some(d) => format!("; the header contains '{}', wrong delimiter?", d as char),
            None => String::new(),
        };
        return Err(ctx(format!(
            "header has {} column(s) with delimiter '{}', need features and a target{hint}",
            headers.len(),
            delimiter as char
        )));
    }

    let target_idx: Vec<usize> = match target {
        TargetSpec::Names(names) => names
            .iter()
            .map(|n| {
                headers
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| ctx(format!("target column '{n}' not in header")))
            })
            .collect::<Result<_>>()?,
        TargetSpec::Last(count) => {
            if *count == 0 || *count >= headers.len() {
                return Err(ctx(format!("cannot use the last {count} columns as targets")));
            }
            (headers.len() - count..headers.len()).collect()
        }
    };
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|i| !target_idx.contains(i)).collect();
    if feature_idx.is_empty() {
        return Err(ctx("no feature columns left".into()));
    }

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ctx(format!("malformed row: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(ctx(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let parse = |i: usize| -> Result<f64> {
            let raw = &record[i];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(ctx(format!(
                    "line {line}: column '{}' has non-numeric value '{raw}'",
                    headers[i]
                ))),
            }
        };
        let features = feature_idx.iter().map(|i| parse(*i)).collect::<Result<Vec<_>>>()?;
        let targets = target_idx.iter().map(|i| parse(*i)).collect::<Result<Vec<_>>>()?;
        samples.push(Sample::new(features, targets)?);
    }
    Ok(Dataset {
        samples: samples.into(),
        n: feature_idx.len(),
        m: target_idx.len(),
        feature_names: feature_idx.iter().map(|i| headers[*i].clone()).collect(),
        target_names: target_idx.iter().map(|i| headers[*i].clone()).collect(),
        normalization: None,
        teacher_floor: None,
    })
}

/// Writes a dataset with quoted header names, features first.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset, delimiter: u8) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::data(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .quote_style(csv::QuoteStyle::NonNumeric)
        .from_path(path)
        .map_err(io)?;
    w.write_record(data.feature_names.iter().chain(&data.target_names)).map_err(io)?;
    for s in data.samples.iter() {
        let row: Vec<String> = s.features.iter().chain(s.target.iter()).map(|v| format!("{v}")).collect();
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Centres every feature and scales it to unit population standard
/// deviation. Constant features are only centred. Targets are untouched.
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    if data.is_empty() {
        return Err(Error::data("cannot standardize an empty dataset"));
    }
    let count = data.len() as f64;
    let mut mean = vec![0.0; data.n];
    for s in data.samples.iter() {
        for (m, v) in mean.iter_mut().zip(s.features.iter()) {
            *m += v / count;
        }
    }
    let mut var = vec![0.0; data.n];
    for s in data.samples.iter() {
        for ((acc, v), m) in var.iter_mut().zip(s.features.iter()).zip(&mean) {
            *acc += (v - m) * (v - m) / count;
        }
    }
    let norm = Normalization {
        mean,
        std: var.iter().map(|v| v.sqrt()).collect(),
    };
    let samples = data
        .samples
        .iter()
        .map(|s| {
            let f = s
                .features
                .iter()
                .enumerate()
                .map(|(i, v)| (v - norm.mean[i]) / norm.scale(i))
                .collect();
            Sample::new(f, s.target.to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples: samples.into(),
        normalization: Some(norm),
        ..data.clone()
    })
}

/// Inverts [`standardize`].
pub fn destandardize(data: &Dataset) -> Result<Dataset> {
    let norm = data
        .normalization
        .as_ref()
        .ok_or_else(|| Error::usage("dataset carries no normalization record"))?;
    let samples = data
        .samples
        .iter()
        .map(|s| {
            let f = s
                .features
                .iter()
                .enumerate()
                .map(|(i, v)| v * norm.scale(i) + norm.mean[i])
                .collect();
            Sample::new(f, s.target.to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples: samples.into(),
        normalization: None,
        ..data.clone()
    })
}

/// A synthetic dataset together with the network that generated it.
#[derive(Debug, Clone)]
pub struct Teacher {
    pub dataset: Dataset,
    pub params: NetParams,
}

/// Draws a teacher network with entries uniform on `[-1, 1]`, features
/// `x ~ N(0, I)` and targets `y(x, W_teacher) + N(0, noise_std^2 I)`.
pub fn synth_teacher(
    arch: NetArch,
    n_samples: usize,
    noise_std: f64,
    half_width: f64,
    seed: u64,
) -> Result<Teacher> {
    if n_samples == 0 {
        return Err(Error::usage("synthetic dataset needs at least one sample"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::usage("teacher noise must be non-negative"));
    }
    if half_width < 1.0 {
        return Err(Error::usage("weight box must contain the teacher's [-1, 1] entries"));
    }
    let mut rng = rng_stream(seed, streams::TEACHER);
    let flat: Vec<f64> = (0..arch.num_params()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let params = NetParams::from_flat(arch, &flat, half_width)?;
    let mut samples = Vec::with_capacity(n_samples);
    let mut floor = 0.0;
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..arch.width).map(|_| rng.sample(StandardNormal)).collect();
        let y_clean = relu::forward_flat(&arch, &flat, &x).y;
        let y: Vec<f64> = y_clean
            .iter()
            .map(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let s = Sample::new(x, y)?;
        floor += relu::loss_flat(&arch, &flat, &s);
        samples.push(s);
    }
    let dataset = Dataset {
        samples: samples.into(),
        n: arch.width,
        m: arch.out,
        feature_names: (1..=arch.width).map(|i| format!("x{i}")).collect(),
        target_names: if arch.out == 1 {
            vec!["y".into()]
        } else {
            (1..=arch.out).map(|i| format!("y{i}")).collect()
        },
        normalization: None,
        teacher_floor: Some(floor / n_samples as f64),
    };
    Ok(Teacher { dataset, params })
}
