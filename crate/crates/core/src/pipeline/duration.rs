//! Per-token log-duration regression.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::labels::TokenSequence;
use crate::nn::{shuffled, LossMonitor, Mlp, Optimizer, TrainConfig, TrainingReport};

use super::corpus::CorpusExample;

/// Anything that assigns a positive frame count to each token.
pub trait DurationPredictor {
    fn durations(&self, tokens: &TokenSequence) -> Result<Vec<usize>>;
}

/// Every token lasts the same number of frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedDuration(pub usize);

impl DurationPredictor for FixedDuration {
    fn durations(&self, tokens: &TokenSequence) -> Result<Vec<usize>> {
        if self.0 == 0 {
            return Err(domain("fixed duration must be >= 1"));
        }
        Ok(vec![self.0; tokens.len()])
    }
}

/// MLP from a one-hot window of `2 * context + 1` tokens (plus a padding
/// symbol past either end) to a log-duration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    pub classes: usize,
    pub context: usize,
    pub mlp: Mlp,
}

/// Rounds a predicted log-duration up to a frame count.
pub fn round_up_duration(log_duration: f64) -> usize {
    let d = log_duration.exp().ceil();
    if d.is_finite() && d >= 1.0 {
        d as usize
    } else {
        1
    }
}

impl DurationModel {
    pub fn new<R: Rng + ?Sized>(classes: usize, context: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![(2 * context + 1) * (classes + 1)];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            classes,
            context,
            mlp: Mlp::new(&sizes, rng),
        }
    }

    pub fn num_params(&self) -> usize {
        self.mlp.num_params()
    }

    fn features(&self, tokens: &TokenSequence) -> Result<Vec<f64>> {
        if tokens.ids().iter().any(|&t| t >= self.classes) {
            return Err(domain(format!("token id out of range for {} classes", self.classes)));
        }
        let width = self.classes + 1;
        let window = 2 * self.context + 1;
        let ids = tokens.ids();
        let mut x = vec![0.0; ids.len() * window * width];
        for i in 0..ids.len() {
            for w in 0..window {
                let j = i as isize + w as isize - self.context as isize;
                let sym = if j < 0 || j >= ids.len() as isize {
                    self.classes
                } else {
                    ids[j as usize]
                };
                x[(i * window + w) * width + sym] = 1.0;
            }
        }
        Ok(x)
    }

    pub fn predict_log(&self, tokens: &TokenSequence) -> Result<Vec<f64>> {
        let x = self.features(tokens)?;
        Ok(self.mlp.forward(&x, tokens.len()).output().to_vec())
    }

    /// `ceil(exp(prediction))`, at least one frame per token.
    pub fn predict_durations(&self, tokens: &TokenSequence) -> Result<Vec<usize>> {
        Ok(self.predict_log(tokens)?.into_iter().map(round_up_duration).collect())
    }

    /// Mean squared log-duration error over all tokens in the batch, and its
    /// parameter gradient.
    pub fn loss_and_grad(&self, batch: &[(&TokenSequence, &[usize])]) -> Result<(f64, Vec<f64>)> {
        let total: usize = batch.iter().map(|(t, _)| t.len()).sum();
        if total == 0 {
            return Err(domain("duration batch is empty"));
        }
        let mut grad = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        for (tokens, durations) in batch {
            if durations.len() != tokens.len() || durations.contains(&0) {
                return Err(domain("durations must be positive, one per token"));
            }
            let x = self.features(tokens)?;
            let tape = self.mlp.forward(&x, tokens.len());
            let d_out: Vec<f64> = tape
                .output()
                .iter()
                .zip(durations.iter())
                .map(|(&p, &d)| {
                    let r = p - (d as f64).ln();
                    loss += r * r;
                    2.0 * r / total as f64
                })
                .collect();
            self.mlp.backward(&tape, &d_out, &mut grad);
        }
        Ok((loss / total as f64, grad))
    }
}

impl DurationPredictor for DurationModel {
    fn durations(&self, tokens: &TokenSequence) -> Result<Vec<usize>> {
        self.predict_durations(tokens)
    }
}

pub fn train_duration<R: Rng + ?Sized>(
    model: &mut DurationModel,
    corpus: &[CorpusExample],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainingReport> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(domain("duration training corpus is empty"));
    }
    if corpus.iter().any(|e| e.tokens.ids().iter().any(|&t| t >= model.classes)) {
        return Err(Error::Config("corpus tokens exceed the duration model's class count".into()));
    }
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, model.num_params());
    let mut monitor = LossMonitor::new();
    let mut report = TrainingReport::default();
    for _ in 0..config.epochs {
        let order = shuffled(corpus.len(), rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&TokenSequence, &[usize])> = chunk
                .iter()
                .map(|&i| (&corpus[i].tokens, corpus[i].durations.as_slice()))
                .collect();
            let (loss, grad) = model.loss_and_grad(&batch)?;
            monitor.record(loss, &grad)?;
            opt.step(model.mlp.params_mut(), &grad);
        }
        report.epoch_losses.push(monitor.end_epoch());
    }
    Ok(report)
}
