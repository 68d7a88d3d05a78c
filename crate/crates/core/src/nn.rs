//! Small dense networks with hand-written backpropagation, the per-frame
//! network shared by the score model and the classifier, and optimizers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameMatrix;
use crate::schedule::Marginal;

pub const TIME_EMBED_DIM: usize = 16;

/// Lower end of the uniform training-time distribution.
pub const DEFAULT_T_MIN: f64 = 1e-5;

/// Sinusoidal features of `t` at frequencies spaced geometrically from 1 to 1000.
pub fn time_embedding(t: f64) -> [f64; TIME_EMBED_DIM] {
    let half = TIME_EMBED_DIM / 2;
    let mut out = [0.0; TIME_EMBED_DIM];
    for i in 0..half {
        let freq = 1000f64.powf(i as f64 / (half - 1) as f64);
        out[i] = (freq * t).sin();
        out[half + i] = (freq * t).cos();
    }
    out
}

/// Fully connected network: `tanh` on hidden layers, linear output.
///
/// Parameters live in one flat vector, layer by layer, each layer storing its
/// `out x in` weight matrix row-major followed by its bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpParts")]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Deserialize)]
struct MlpParts {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl TryFrom<MlpParts> for Mlp {
    type Error = Error;

    fn try_from(p: MlpParts) -> Result<Self> {
        Mlp::from_parts(p.sizes, p.params)
    }
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    rows: usize,
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape has an output layer")
    }
}

impl Mlp {
    /// Uniform `+-1/sqrt(fan_in)` weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let mut params = Vec::with_capacity(Self::count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Format(format!("invalid layer sizes {sizes:?}")));
        }
        if params.len() != Self::count(&sizes) {
            return Err(Error::Format(format!(
                "layer sizes {sizes:?} need {} parameters, got {}",
                Self::count(&sizes),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Self { sizes, params })
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Zeroes the last layer so the network initially outputs exactly zero.
    pub fn zero_output_layer(&mut self) {
        let n = self.sizes.len();
        let last = self.sizes[n - 2] * self.sizes[n - 1] + self.sizes[n - 1];
        let len = self.params.len();
        self.params[len - last..].fill(0.0);
    }

    /// Runs `rows` inputs, stored row-major, through the network.
    pub fn forward(&self, inputs: &[f64], rows: usize) -> Tape {
        assert_eq!(inputs.len(), rows * self.input_size());
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(inputs.to_vec());
        let mut offset = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let prev = activations.last().unwrap();
            let mut next = vec![0.0; rows * n_out];
            for r in 0..rows {
                let x = &prev[r * n_in..(r + 1) * n_in];
                for o in 0..n_out {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    next[r * n_out + o] = if l + 1 < layers { z.tanh() } else { z };
                }
            }
            activations.push(next);
        }
        Tape { rows, activations }
    }

    /// Accumulates `d loss / d params` into `grad` and returns `d loss / d inputs`.
    pub fn backward(&self, tape: &Tape, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len());
        let rows = tape.rows;
        assert_eq!(d_out.len(), rows * self.output_size());
        let mut delta = d_out.to_vec();
        let mut offset_end = self.params.len();
        for l in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = offset_end - (n_in * n_out + n_out);
            let weights = &self.params[start..start + n_in * n_out];
            let a_in = &tape.activations[l];
            {
                let (gw, gb) = grad[start..offset_end].split_at_mut(n_in * n_out);
                for r in 0..rows {
                    let x = &a_in[r * n_in..(r + 1) * n_in];
                    for o in 0..n_out {
                        let d = delta[r * n_out + o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                }
            }
            let mut d_in = vec![0.0; rows * n_in];
            for r in 0..rows {
                let dr = &mut d_in[r * n_in..(r + 1) * n_in];
                for o in 0..n_out {
                    let d = delta[r * n_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    for (di, w) in dr.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *di += d * w;
                    }
                }
            }
            if l > 0 {
                // a_in = tanh(z) for hidden layers.
                for (di, a) in d_in.iter_mut().zip(a_in) {
                    *di *= 1.0 - a * a;
                }
            }
            delta = d_in;
            offset_end = start;
        }
        delta
    }
}

/// Hyperparameters of a [`FrameNet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameNetConfig {
    /// Channels per frame.
    pub dims: usize,
    /// Neighbouring frames on each side concatenated to the input.
    pub context: usize,
    pub hidden: Vec<usize>,
    /// Length of the optional global conditioning vector appended to every frame.
    #[serde(default)]
    pub cond_dim: usize,
}

/// Per-frame network on `(x_t window, time embedding[, conditioning])`.
///
/// Inputs are rescaled by `1 / sqrt(alpha_t^2 data_std^2 + lambda(t))` so the
/// network sees unit-scale values at every noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameNet {
    pub config: FrameNetConfig,
    pub data_std: f64,
    pub cond: Vec<f64>,
    pub mlp: Mlp,
}

/// Forward state needed to backpropagate through a [`FrameNet`].
#[derive(Clone, Debug)]
pub struct FrameTape {
    frames: usize,
    input_scale: f64,
    tape: Tape,
}

impl FrameTape {
    /// Network outputs, `frames x out_dim` row-major.
    pub fn output(&self) -> &[f64] {
        self.tape.output()
    }
}

impl FrameNet {
    pub fn new<R: Rng + ?Sized>(config: FrameNetConfig, out_dim: usize, rng: &mut R) -> Self {
        let input = (2 * config.context + 1) * config.dims + TIME_EMBED_DIM + config.cond_dim;
        let mut sizes = vec![input];
        sizes.extend(&config.hidden);
        sizes.push(out_dim);
        let mlp = Mlp::new(&sizes, rng);
        Self {
            cond: vec![0.0; config.cond_dim],
            config,
            data_std: 1.0,
            mlp,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.mlp.output_size()
    }

    pub fn input_scale(&self, m: &Marginal) -> f64 {
        1.0 / (m.alpha * m.alpha * self.data_std * self.data_std + m.lambda).sqrt()
    }

    fn inputs(&self, x: &FrameMatrix, m: &Marginal, scale: f64) -> Vec<f64> {
        let (frames, dims) = x.shape();
        let w = self.config.context as isize;
        let emb = time_embedding(m.t);
        let width = self.mlp.input_size();
        let mut out = Vec::with_capacity(frames * width);
        for f in 0..frames as isize {
            for off in -w..=w {
                let g = f + off;
                if g < 0 || g >= frames as isize {
                    out.extend(std::iter::repeat_n(0.0, dims));
                } else {
                    out.extend(x.row(g as usize).iter().map(|v| v * scale));
                }
            }
            out.extend_from_slice(&emb);
            out.extend_from_slice(&self.cond);
        }
        out
    }

    pub fn forward(&self, x: &FrameMatrix, m: &Marginal) -> Result<FrameTape> {
        if x.dims() != self.config.dims {
            return Err(Error::Shape {
                expected: (x.frames(), self.config.dims),
                got: x.shape(),
            });
        }
        let scale = self.input_scale(m);
        let inputs = self.inputs(x, m, scale);
        Ok(FrameTape {
            frames: x.frames(),
            input_scale: scale,
            tape: self.mlp.forward(&inputs, x.frames()),
        })
    }

    /// Backpropagates `d_out` (`frames x out_dim`). Parameter gradients are
    /// accumulated into `grad` when given; the input gradient is returned.
    pub fn backward(&self, tape: &FrameTape, d_out: &[f64], grad: Option<&mut [f64]>) -> FrameMatrix {
        let mut scratch;
        let grad = match grad {
            Some(g) => g,
            None => {
                scratch = vec![0.0; self.mlp.num_params()];
                &mut scratch[..]
            }
        };
        let d_in = self.mlp.backward(&tape.tape, d_out, grad);
        let dims = self.config.dims;
        let frames = tape.frames;
        let w = self.config.context as isize;
        let width = self.mlp.input_size();
        let mut dx = FrameMatrix::zeros(frames, dims);
        for f in 0..frames as isize {
            let row = &d_in[f as usize * width..(f as usize + 1) * width];
            for (slot, off) in (-w..=w).enumerate() {
                let g = f + off;
                if g < 0 || g >= frames as isize {
                    continue;
                }
                let src = &row[slot * dims..(slot + 1) * dims];
                for (o, s) in dx.row_mut(g as usize).iter_mut().zip(src) {
                    *o += s * tape.input_scale;
                }
            }
        }
        dx
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?} (sgd | adam)"))),
        }
    }
}

/// Training hyperparameters shared by all trainable models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Lower bound of the uniform training-time distribution on `[t_min, 1]`.
    pub t_min: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 32,
            optimizer: OptimizerKind::Sgd,
            t_min: DEFAULT_T_MIN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(self.t_min > 0.0 && self.t_min < 1.0) {
            return Err(Error::Config("t_min must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// First-order optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64, params: usize) -> Self {
        Self {
            kind,
            lr,
            m: vec![0.0; params],
            v: vec![0.0; params],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        if self.lr == 0.0 {
            return;
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.step += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.step);
                let c2 = 1.0 - Self::BETA2.powi(self.step);
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
                    self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
                    let mhat = self.m[i] / c1;
                    let vhat = self.v[i] / c2;
                    *p -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Per-epoch mean losses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_losses: Vec<f64>,
}

impl TrainingReport {
    pub fn first(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Tracks losses within an epoch and aborts on non-finite values.
pub(crate) struct LossMonitor {
    epoch: usize,
    step: usize,
    sum: f64,
    count: usize,
    last_finite: f64,
}

impl LossMonitor {
    pub(crate) fn new() -> Self {
        Self {
            epoch: 0,
            step: 0,
            sum: 0.0,
            count: 0,
            last_finite: f64::NAN,
        }
    }

    pub(crate) fn record(&mut self, loss: f64, grad: &[f64]) -> Result<()> {
        self.step += 1;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                epoch: self.epoch,
                step: self.step,
                loss,
                last_finite: self.last_finite,
            });
        }
        self.last_finite = loss;
        self.sum += loss;
        self.count += 1;
        Ok(())
    }

    pub(crate) fn end_epoch(&mut self) -> f64 {
        let mean = self.sum / self.count.max(1) as f64;
        self.epoch += 1;
        self.sum = 0.0;
        self.count = 0;
        mean
    }
}

/// Fisher-Yates order over `0..n` drawn from `rng`.
pub(crate) fn shuffled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
