//! Bias-free ReLU networks trained with squared loss.
//!
//! ```text
//! s_1 = x,  s_{l+1} = max(0, W_l s_l)  (l < L),  y = W_L s_L
//! ```
//!
//! Hidden layers are `n x n`, the output layer `m x n`. Parameters flatten
//! layer by layer, each layer row-major; this layout is frozen because traces
//! and configs depend on it.
//!
//! The subgradient is the backward pass with selector `D_l = diag(1[W_l s_l > 0])`,
//! so an exactly zero pre-activation selects 0.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feasible::BoxConstraint;
use crate::linalg::{check_dims, Matrix, Vector};
use crate::oracle::{rng_stream, streams, Oracle, Selection, SubgradientEstimate};

/// Default half-width of the weight box.
pub const DEFAULT_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetArch {
    pub depth: usize,
    pub width: usize,
    pub out: usize,
}

impl NetArch {
    pub fn new(depth: usize, width: usize, out: usize) -> Result<Self> {
        if depth == 0 || width == 0 || out == 0 {
            return Err(Error::usage(format!(
                "network architecture {depth},{width},{out} must have positive entries"
            )));
        }
        Ok(NetArch { depth, width, out })
    }

    /// `(rows, cols)` of layer `l` (zero-based).
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        if l + 1 == self.depth {
            (self.out, self.width)
        } else {
            (self.width, self.width)
        }
    }

    pub fn num_params(&self) -> usize {
        (self.depth - 1) * self.width * self.width + self.out * self.width
    }

    fn offset(&self, l: usize) -> usize {
        l * self.width * self.width
    }
}

impl std::fmt::Display for NetArch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.depth, self.width, self.out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vector,
    pub target: Vector,
}

impl Sample {
    pub fn new(features: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        Ok(Sample {
            features: Vector::new(features)?,
            target: Vector::new(target)?,
        })
    }
}

/// Network weights as a list of matrices plus the box they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    arch: NetArch,
    layers: Vec<Matrix>,
    half_width: f64,
}

impl NetParams {
    pub fn new(arch: NetArch, layers: Vec<Matrix>, half_width: f64) -> Result<Self> {
        if layers.len() != arch.depth {
            return Err(Error::usage(format!(
                "expected {} layers, got {}",
                arch.depth,
                layers.len()
            )));
        }
        for (l, m) in layers.iter().enumerate() {
            if (m.rows(), m.cols()) != arch.layer_shape(l) {
                return Err(Error::usage(format!("layer {l} has the wrong shape")));
            }
        }
        if !(half_width > 0.0) {
            return Err(Error::usage("weight box half-width must be positive"));
        }
        Ok(NetParams {
            arch,
            layers,
            half_width,
        })
    }

    pub fn from_flat(arch: NetArch, flat: &[f64], half_width: f64) -> Result<Self> {
        check_dims("flattened weights", flat.len(), arch.num_params())?;
        let layers = (0..arch.depth)
            .map(|l| {
                let (r, c) = arch.layer_shape(l);
                let off = arch.offset(l);
                Matrix::new(r, c, flat[off..off + r * c].to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        NetParams::new(arch, layers, half_width)
    }

    /// Entries i.i.d. uniform on `[-1/sqrt(n), 1/sqrt(n)]`.
    pub fn init_uniform(arch: NetArch, half_width: f64, rng: &mut impl Rng) -> Result<Self> {
        let r = 1.0 / (arch.width as f64).sqrt();
        let flat: Vec<f64> = (0..arch.num_params()).map(|_| rng.random_range(-r..=r)).collect();
        let mut p = NetParams::from_flat(arch, &flat, half_width)?;
        p.project();
        Ok(p)
    }

    pub fn arch(&self) -> NetArch {
        self.arch
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn flatten(&self) -> Vector {
        let mut out = Vec::with_capacity(self.arch.num_params());
        for m in &self.layers {
            out.extend_from_slice(m.as_slice());
        }
        Vector::from_vec_unchecked(out)
    }

    pub fn weight_box(&self) -> BoxConstraint {
        BoxConstraint::symmetric(self.arch.num_params(), self.half_width).expect("positive width")
    }

    /// Clamps every weight into `[-half_width, half_width]`.
    pub fn project(&mut self) {
        let flat: Vec<f64> = self
            .flatten()
            .iter()
            .map(|w| w.clamp(-self.half_width, self.half_width))
            .collect();
        *self = NetParams::from_flat(self.arch, &flat, self.half_width).expect("same shape");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `s_1 .. s_L`
    pub s: Vec<Vec<f64>>,
    /// `W_l s_l` for every layer, including the output layer.
    pub preacts: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

/// Forward pass on flat weights; shapes are assumed consistent.
pub(crate) fn forward_flat(arch: &NetArch, w: &[f64], x: &[f64]) -> ForwardTrace {
    let mut s = Vec::with_capacity(arch.depth);
    let mut preacts = Vec::with_capacity(arch.depth);
    let mut cur = x.to_vec();
    for l in 0..arch.depth {
        let (rows, cols) = arch.layer_shape(l);
        let off = arch.offset(l);
        let pre: Vec<f64> = (0..rows)
            .map(|r| {
                let row = &w[off + r * cols..off + (r + 1) * cols];
                row.iter().zip(&cur).map(|(a, b)| a * b).sum()
            })
            .collect();
        let next = if l + 1 < arch.depth {
            pre.iter().map(|v| v.max(0.0)).collect()
        } else {
            pre.clone()
        };
        s.push(std::mem::replace(&mut cur, next));
        preacts.push(pre);
    }
    ForwardTrace { s, preacts, y: cur }
}

fn half_sq_err(y: &[f64], target: &[f64]) -> f64 {
    0.5 * y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

pub(crate) fn loss_flat(arch: &NetArch, w: &[f64], sample: &Sample) -> f64 {
    half_sq_err(&forward_flat(arch, w, &sample.features).y, &sample.target)
}

/// Adds `scale` times the backward-pass subgradient of one sample into `out`.
pub(crate) fn accumulate_subgrad(
    arch: &NetArch,
    w: &[f64],
    sample: &Sample,
    scale: f64,
    out: &mut [f64],
) -> f64 {
    let tr = forward_flat(arch, w, &sample.features);
    // Gradient with respect to the current layer's output.
    let mut delta: Vec<f64> = tr.y.iter().zip(sample.target.iter()).map(|(a, b)| a - b).collect();
    let loss = 0.5 * delta.iter().map(|d| d * d).sum::<f64>();
    for l in (0..arch.depth).rev() {
        let (rows, cols) = arch.layer_shape(l);
        let off = arch.offset(l);
        if l + 1 < arch.depth {
            for (d, pre) in delta.iter_mut().zip(&tr.preacts[l]) {
                if *pre <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let input = &tr.s[l];
        for r in 0..rows {
            let dr = scale * delta[r];
            if dr != 0.0 {
                let row = &mut out[off + r * cols..off + (r + 1) * cols];
                for (o, si) in row.iter_mut().zip(input) {
                    *o += dr * si;
                }
            }
        }
        if l > 0 {
            let mut back = vec![0.0; cols];
            for r in 0..rows {
                let row = &w[off + r * cols..off + (r + 1) * cols];
                for (b, wv) in back.iter_mut().zip(row) {
                    *b += wv * delta[r];
                }
            }
            delta = back;
        }
    }
    loss
}

fn check_sample(sample: &Sample, arch: &NetArch) -> Result<()> {
    check_dims("sample features", sample.features.dim(), arch.width)?;
    check_dims("sample target", sample.target.dim(), arch.out)
}

pub fn forward(sample: &Sample, params: &NetParams) -> Result<ForwardTrace> {
    check_sample(sample, &params.arch)?;
    Ok(forward_flat(&params.arch, &params.flatten(), &sample.features))
}

/// `½|y(x, W) - y_target|²`
pub fn sample_loss(sample: &Sample, params: &NetParams) -> Result<f64> {
    check_sample(sample, &params.arch)?;
    Ok(loss_flat(&params.arch, &params.flatten(), sample))
}

/// Backward-pass subgradient of the sample loss, flattened like the weights.
pub fn sample_subgrad(sample: &Sample, params: &NetParams) -> Result<Vector> {
    check_sample(sample, &params.arch)?;
    let mut out = vec![0.0; params.arch.num_params()];
    accumulate_subgrad(&params.arch, &params.flatten(), sample, 1.0, &mut out);
    Ok(Vector::from_vec_unchecked(out))
}

/// Mean of the per-sample subgradients, summed in batch order.
pub fn minibatch_subgrad(samples: &[Sample], params: &NetParams) -> Result<Vector> {
    if samples.is_empty() {
        return Err(Error::usage("minibatch is empty"));
    }
    samples.iter().try_for_each(|s| check_sample(s, &params.arch))?;
    let w = params.flatten();
    let mut out = vec![0.0; params.arch.num_params()];
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        accumulate_subgrad(&params.arch, &w, s, scale, &mut out);
    }
    Ok(Vector::from_vec_unchecked(out))
}

/// Closed form for two layers and a scalar output:
/// `(y - Y) [ D W_2ᵀ xᵀ | (W_1 x)_+ᵀ ]`, flattened like the weights.
pub fn two_layer_closed_form(sample: &Sample, params: &NetParams) -> Result<Vector> {
    let arch = params.arch;
    if arch.depth != 2 || arch.out != 1 {
        return Err(Error::usage("closed form needs depth 2 and a scalar output"));
    }
    check_sample(sample, &arch)?;
    let n = arch.width;
    let (w1, w2) = (&params.layers[0], &params.layers[1]);
    let x = sample.features.as_slice();
    let h = w1.mul_vec(x);
    let y: f64 = (0..n).map(|i| w2.get(0, i) * h[i].max(0.0)).sum();
    let r = y - sample.target[0];
    let mut out = vec![0.0; arch.num_params()];
    for i in 0..n {
        let d = if h[i] > 0.0 { 1.0 } else { 0.0 };
        for j in 0..n {
            out[i * n + j] = r * d * w2.get(0, i) * x[j];
        }
        out[n * n + i] = r * h[i].max(0.0);
    }
    Ok(Vector::from_vec_unchecked(out))
}

/// Mean loss over a fixed batch, as a deterministic objective with the
/// backward-pass selection.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    arch: NetArch,
    samples: Arc<[Sample]>,
}

impl BatchLoss {
    pub fn new(arch: NetArch, samples: impl Into<Arc<[Sample]>>) -> Result<Self> {
        let samples = samples.into();
        if samples.is_empty() {
            return Err(Error::usage("batch loss needs at least one sample"));
        }
        samples.iter().try_for_each(|s| check_sample(s, &arch))?;
        Ok(BatchLoss { arch, samples })
    }

    pub fn arch(&self) -> NetArch {
        self.arch
    }
}

impl Selection for BatchLoss {
    fn dim(&self) -> usize {
        self.arch.num_params()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let n = self.samples.len() as f64;
        self.samples.iter().map(|s| loss_flat(&self.arch, w, s)).sum::<f64>() / n
    }

    fn subgradient(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.arch.num_params()];
        let scale = 1.0 / self.samples.len() as f64;
        for s in self.samples.iter() {
            accumulate_subgrad(&self.arch, w, s, scale, &mut out);
        }
        out
    }
}

/// What the oracle reports as its loss estimate.
#[derive(Debug, Clone)]
pub enum LossMonitor {
    /// Mean loss of the drawn minibatch.
    Batch,
    /// Mean loss over a fixed evaluation set at the query point.
    Fixed(Arc<[Sample]>),
}

/// Stochastic oracle drawing minibatches uniformly with replacement.
///
/// Batch indices come from the data stream of the seed and do not depend on
/// the query points, so two methods run with the same seed see the same
/// observation sequence.
#[derive(Debug, Clone)]
pub struct ReluOracle {
    arch: NetArch,
    data: Arc<[Sample]>,
    batch: usize,
    monitor: LossMonitor,
    rng: ChaCha8Rng,
}

impl ReluOracle {
    pub fn new(arch: NetArch, data: impl Into<Arc<[Sample]>>, batch: usize, seed: u64) -> Result<Self> {
        let data = data.into();
        if data.is_empty() {
            return Err(Error::data("training data is empty"));
        }
        if batch == 0 {
            return Err(Error::usage("batch size must be positive"));
        }
        data.iter().try_for_each(|s| check_sample(s, &arch))?;
        Ok(ReluOracle {
            arch,
            data,
            batch,
            monitor: LossMonitor::Batch,
            rng: rng_stream(seed, streams::DATA),
        })
    }

    pub fn with_monitor(mut self, monitor: LossMonitor) -> Self {
        self.monitor = monitor;
        self
    }
}

impl Oracle for ReluOracle {
    fn dim(&self) -> usize {
        self.arch.num_params()
    }

    fn query(&mut self, w: &[f64]) -> SubgradientEstimate {
        let mut g = vec![0.0; self.arch.num_params()];
        let scale = 1.0 / self.batch as f64;
        let mut batch_loss = 0.0;
        for _ in 0..self.batch {
            let s = self.data.choose(&mut self.rng).expect("nonempty data");
            batch_loss += scale * accumulate_subgrad(&self.arch, w, s, scale, &mut g);
        }
        let f_estimate = match &self.monitor {
            LossMonitor::Batch => batch_loss,
            LossMonitor::Fixed(eval) => {
                eval.iter().map(|s| loss_flat(&self.arch, w, s)).sum::<f64>() / eval.len() as f64
            }
        };
        SubgradientEstimate {
            g: Vector::from_vec_unchecked(g),
            f_estimate,
            true_part: None,
        }
    }
}
