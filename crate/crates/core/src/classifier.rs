//! Frame-wise classifier on corrupted inputs, trained with cross-entropy
//! over all noise levels and used for guidance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{accuracy_profile, AccuracyRow, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::frame::FrameMatrix;
use crate::labels::FrameLabels;
use crate::mixture::log_sum_exp;
use crate::model::{ClassifierGrad, FramePosterior};
use crate::nn::{shuffled, FrameNet, FrameNetConfig, LossMonitor, Optimizer, TrainConfig, DEFAULT_T_MIN};
use crate::schedule::{corrupt_with, NoiseSchedule};

/// A frame matrix with one label per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledFrames {
    pub frames: FrameMatrix,
    pub labels: FrameLabels,
}

impl LabeledFrames {
    pub fn new(frames: FrameMatrix, labels: FrameLabels) -> Result<Self> {
        if frames.frames() != labels.len() {
            return Err(domain(format!(
                "{} labels for {} frames",
                labels.len(),
                frames.frames()
            )));
        }
        Ok(Self { frames, labels })
    }
}

/// Per-frame logits from a [`FrameNet`] with `K` outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierNetwork {
    pub net: FrameNet,
    pub sched: NoiseSchedule,
}

impl ClassifierNetwork {
    pub fn new<R: Rng + ?Sized>(
        config: FrameNetConfig,
        classes: usize,
        sched: NoiseSchedule,
        data_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = FrameNet::new(config, classes, rng);
        net.data_std = data_std;
        Self { net, sched }
    }

    pub fn num_params(&self) -> usize {
        self.net.mlp.num_params()
    }

    pub fn num_classes(&self) -> usize {
        self.net.out_dim()
    }

    /// Sets the global conditioning vector appended to every frame's input.
    pub fn set_conditioning(&mut self, cond: Vec<f64>) -> Result<()> {
        if cond.len() != self.net.config.cond_dim {
            return Err(domain(format!(
                "conditioning vector has length {}, network expects {}",
                cond.len(),
                self.net.config.cond_dim
            )));
        }
        self.net.cond = cond;
        Ok(())
    }

    fn check(&self, xt: &FrameMatrix, labels: &FrameLabels) -> Result<()> {
        if labels.len() != xt.frames() {
            return Err(domain(format!("{} labels for {} frames", labels.len(), xt.frames())));
        }
        labels.validate(self.num_classes())
    }

    /// Logits, `frames x K` row-major.
    pub fn logits(&self, xt: &FrameMatrix, t: f64) -> Result<Vec<f64>> {
        let m = self.sched.marginal(t)?;
        Ok(self.net.forward(xt, &m)?.output().to_vec())
    }

    /// `sum_f log softmax(logits_f)[labels_f]`.
    pub fn log_prob(&self, xt: &FrameMatrix, labels: &FrameLabels, t: f64) -> Result<f64> {
        self.check(xt, labels)?;
        let k = self.num_classes();
        let logits = self.logits(xt, t)?;
        Ok(logits
            .chunks_exact(k)
            .zip(labels.ids())
            .map(|(row, &y)| row[y] - log_sum_exp(row))
            .sum())
    }

    /// Exact input gradient of [`Self::log_prob`] by backpropagation.
    pub fn log_prob_grad(&self, xt: &FrameMatrix, labels: &FrameLabels, t: f64) -> Result<FrameMatrix> {
        self.check(xt, labels)?;
        let m = self.sched.marginal(t)?;
        let tape = self.net.forward(xt, &m)?;
        let d_out = softmax_residual(tape.output(), labels, self.num_classes(), 1.0);
        Ok(self.net.backward(&tape, &d_out, None))
    }

    /// Per-frame mean cross-entropy and its parameter gradient for fixed draws.
    pub fn loss_and_grad(&self, batch: &[LabeledFrames], draws: &[ClassifierDraw]) -> Result<(f64, Vec<f64>)> {
        check_draws(batch, draws)?;
        let total_frames: usize = batch.iter().map(|b| b.labels.len()).sum();
        let inv = 1.0 / total_frames as f64;
        let k = self.num_classes();
        let mut grad = vec![0.0; self.num_params()];
        let mut nll = 0.0;
        for (ex, d) in batch.iter().zip(draws) {
            self.check(&ex.frames, &ex.labels)?;
            let m = self.sched.marginal(d.t)?;
            let (xt, _) = corrupt_with(&ex.frames, &m, &d.noise);
            let tape = self.net.forward(&xt, &m)?;
            for (row, &y) in tape.output().chunks_exact(k).zip(ex.labels.ids()) {
                nll -= row[y] - log_sum_exp(row);
            }
            // d(-log p)/d logits = softmax - onehot
            let d_out = softmax_residual(tape.output(), &ex.labels, k, -inv);
            self.net.backward(&tape, &d_out, Some(&mut grad));
        }
        Ok((nll * inv, grad))
    }
}

/// `scale * (onehot(label) - softmax(logits))` per frame.
fn softmax_residual(logits: &[f64], labels: &FrameLabels, k: usize, scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for (row, &y) in logits.chunks_exact(k).zip(labels.ids()) {
        let lse = log_sum_exp(row);
        for (j, z) in row.iter().enumerate() {
            let p = (z - lse).exp();
            let onehot = if j == y { 1.0 } else { 0.0 };
            out.push(scale * (onehot - p));
        }
    }
    out
}

impl ClassifierGrad for ClassifierNetwork {
    fn classes(&self) -> usize {
        self.num_classes()
    }

    fn log_prob_grad(&self, xt: &FrameMatrix, labels: &FrameLabels, t: f64) -> Result<FrameMatrix> {
        ClassifierNetwork::log_prob_grad(self, xt, labels, t)
    }
}

impl FramePosterior for ClassifierNetwork {
    fn classes(&self) -> usize {
        self.num_classes()
    }

    fn frame_posteriors(&self, xt: &FrameMatrix, t: f64) -> Result<Vec<Vec<f64>>> {
        let k = self.num_classes();
        Ok(self
            .logits(xt, t)?
            .chunks_exact(k)
            .map(|row| {
                let lse = log_sum_exp(row);
                row.iter().map(|z| (z - lse).exp()).collect()
            })
            .collect())
    }
}

/// One example's corruption time and standard-normal noise.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierDraw {
    pub t: f64,
    pub noise: FrameMatrix,
}

pub fn draw_corruption<R: Rng + ?Sized>(batch: &[LabeledFrames], t_min: f64, rng: &mut R) -> Vec<ClassifierDraw> {
    batch
        .iter()
        .map(|ex| {
            let t = rng.random_range(t_min..=1.0);
            ClassifierDraw {
                t,
                noise: FrameMatrix::gaussian(ex.frames.frames(), ex.frames.dims(), 1.0, rng),
            }
        })
        .collect()
}

fn check_draws(batch: &[LabeledFrames], draws: &[ClassifierDraw]) -> Result<()> {
    if batch.is_empty() {
        return Err(domain("classifier batch is empty"));
    }
    if draws.len() != batch.len() {
        return Err(domain(format!("{} draws for {} examples", draws.len(), batch.len())));
    }
    for (ex, d) in batch.iter().zip(draws) {
        d.noise.ensure_shape(ex.frames.shape())?;
    }
    Ok(())
}

/// Per-frame mean negative log-probability under fixed corruption draws.
pub fn ce_loss_with_draws<C: FramePosterior + ?Sized>(
    clf: &C,
    sched: &NoiseSchedule,
    batch: &[LabeledFrames],
    draws: &[ClassifierDraw],
) -> Result<f64> {
    check_draws(batch, draws)?;
    let mut nll = 0.0;
    let mut frames = 0usize;
    for (ex, d) in batch.iter().zip(draws) {
        let m = sched.marginal(d.t)?;
        let (xt, _) = corrupt_with(&ex.frames, &m, &d.noise);
        let post = clf.frame_posteriors(&xt, d.t)?;
        for (row, &y) in post.iter().zip(ex.labels.ids()) {
            if y >= row.len() {
                return Err(domain(format!("label {y} out of range")));
            }
            nll -= row[y].ln();
            frames += 1;
        }
    }
    Ok(nll / frames as f64)
}

/// Cross-entropy with `t ~ U[t_min, 1]` per example.
pub fn ce_loss<C: FramePosterior + ?Sized, R: Rng + ?Sized>(
    clf: &C,
    sched: &NoiseSchedule,
    batch: &[LabeledFrames],
    rng: &mut R,
) -> Result<f64> {
    let draws = draw_corruption(batch, DEFAULT_T_MIN, rng);
    ce_loss_with_draws(clf, sched, batch, &draws)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub epoch_losses: Vec<f64>,
    /// Frame accuracy over diffusion time on the training data after training.
    pub accuracy_profile: Vec<AccuracyRow>,
}

/// Bins in the accuracy profile attached to a training report.
pub const REPORT_PROFILE_BINS: usize = 10;

pub fn train_classifier<R: Rng + ?Sized>(
    clf: &mut ClassifierNetwork,
    corpus: &[LabeledFrames],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<ClassifierReport> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(domain("classifier training corpus is empty"));
    }
    for ex in corpus {
        clf.check(&ex.frames, &ex.labels)?;
        if ex.frames.dims() != clf.net.config.dims {
            return Err(Error::Shape {
                expected: (ex.frames.frames(), clf.net.config.dims),
                got: ex.frames.shape(),
            });
        }
    }
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, clf.num_params());
    let mut monitor = LossMonitor::new();
    let mut report = ClassifierReport::default();
    for _ in 0..config.epochs {
        let order = shuffled(corpus.len(), rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<LabeledFrames> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let draws = draw_corruption(&batch, config.t_min, rng);
            let (loss, grad) = clf.loss_and_grad(&batch, &draws)?;
            monitor.record(loss, &grad)?;
            opt.step(clf.net.mlp.params_mut(), &grad);
        }
        report.epoch_losses.push(monitor.end_epoch());
    }
    let sched = clf.sched;
    report.accuracy_profile = accuracy_profile(
        &*clf,
        &sched,
        corpus,
        &TimeGrid::Midpoints(REPORT_PROFILE_BINS),
        rng,
    )?;
    Ok(report)
}
