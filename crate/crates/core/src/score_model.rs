//! Trainable per-frame score network and denoising score matching.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::frame::FrameMatrix;
use crate::model::ScoreFn;
use crate::nn::{
    shuffled, FrameNet, FrameNetConfig, LossMonitor, Optimizer, TrainConfig, TrainingReport,
    DEFAULT_T_MIN,
};
use crate::schedule::{corrupt_with, NoiseSchedule};

/// `s(x_t, t) = -h(x_t, t) / sqrt(lambda(t))`, with `h` a [`FrameNet`]
/// predicting the standard-normal noise behind `x_t`.
///
/// `lambda` is floored at `lambda(t_floor)` so evaluation at `t = 0` stays finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreNetwork {
    pub net: FrameNet,
    pub sched: NoiseSchedule,
    pub t_floor: f64,
}

impl ScoreNetwork {
    /// New network with a zero-initialized output layer.
    pub fn new<R: Rng + ?Sized>(
        config: FrameNetConfig,
        sched: NoiseSchedule,
        data_std: f64,
        rng: &mut R,
    ) -> Self {
        let dims = config.dims;
        let mut net = FrameNet::new(config, dims, rng);
        net.mlp.zero_output_layer();
        net.data_std = data_std;
        Self {
            net,
            sched,
            t_floor: DEFAULT_T_MIN,
        }
    }

    pub fn num_params(&self) -> usize {
        self.net.mlp.num_params()
    }

    fn output_scale(&self, t: f64) -> Result<f64> {
        let lambda = self.sched.lambda_at(t)?.max(self.sched.lambda_at(self.t_floor)?);
        Ok(-1.0 / lambda.sqrt())
    }

    pub fn score_eval(&self, xt: &FrameMatrix, t: f64) -> Result<FrameMatrix> {
        if !xt.is_finite() {
            return Err(Error::NonFinite("score network input".into()));
        }
        let m = self.sched.marginal(t)?;
        let c_out = self.output_scale(t)?;
        let tape = self.net.forward(xt, &m)?;
        let data = tape.output().iter().map(|h| c_out * h).collect();
        Ok(FrameMatrix::from_vec_unchecked(xt.frames(), xt.dims(), data))
    }

    /// Batch-mean score-matching loss and its parameter gradient for fixed draws.
    pub fn loss_and_grad(&self, batch: &[FrameMatrix], draws: &[LossDraw]) -> Result<(f64, Vec<f64>)> {
        check_batch(batch, draws)?;
        let mut grad = vec![0.0; self.num_params()];
        let mut total = 0.0;
        let inv_b = 1.0 / batch.len() as f64;
        for (x0, draw) in batch.iter().zip(draws) {
            let m = self.sched.marginal(draw.t)?;
            let (xt, eps) = corrupt_with(x0, &m, &draw.noise);
            let c_out = self.output_scale(draw.t)?;
            let tape = self.net.forward(&xt, &m)?;
            let mut d_out = Vec::with_capacity(tape.output().len());
            for (h, e) in tape.output().iter().zip(eps.as_slice()) {
                let r = c_out * h + e / m.lambda;
                total += r * r;
                d_out.push(2.0 * r * c_out * inv_b);
            }
            self.net.backward(&tape, &d_out, Some(&mut grad));
        }
        Ok((total * inv_b, grad))
    }
}

impl ScoreFn for ScoreNetwork {
    fn dims(&self) -> usize {
        self.net.config.dims
    }

    fn score(&self, xt: &FrameMatrix, t: f64) -> Result<FrameMatrix> {
        self.score_eval(xt, t)
    }
}

/// One example's diffusion time and standard-normal noise.
#[derive(Clone, Debug, PartialEq)]
pub struct LossDraw {
    pub t: f64,
    pub noise: FrameMatrix,
}

/// Per example, in order: `t ~ U[t_min, 1]`, then one normal per entry.
pub fn draw_noise<R: Rng + ?Sized>(batch: &[FrameMatrix], t_min: f64, rng: &mut R) -> Vec<LossDraw> {
    batch
        .iter()
        .map(|x0| {
            let t = rng.random_range(t_min..=1.0);
            LossDraw {
                t,
                noise: FrameMatrix::gaussian(x0.frames(), x0.dims(), 1.0, rng),
            }
        })
        .collect()
}

fn check_batch(batch: &[FrameMatrix], draws: &[LossDraw]) -> Result<()> {
    if batch.is_empty() {
        return Err(domain("score-matching batch is empty"));
    }
    if draws.len() != batch.len() {
        return Err(domain(format!("{} draws for {} examples", draws.len(), batch.len())));
    }
    for (x0, d) in batch.iter().zip(draws) {
        d.noise.ensure_shape(x0.shape())?;
    }
    Ok(())
}

/// `mean_i || s(x_t, t) + eps / lambda(t) ||^2` for fixed draws.
pub fn sm_loss_with_draws<S: ScoreFn + ?Sized>(
    model: &S,
    sched: &NoiseSchedule,
    batch: &[FrameMatrix],
    draws: &[LossDraw],
) -> Result<f64> {
    check_batch(batch, draws)?;
    let mut total = 0.0;
    for (x0, draw) in batch.iter().zip(draws) {
        let m = sched.marginal(draw.t)?;
        let (xt, eps) = corrupt_with(x0, &m, &draw.noise);
        let s = model.score(&xt, draw.t)?;
        total += s
            .as_slice()
            .iter()
            .zip(eps.as_slice())
            .map(|(s, e)| (s + e / m.lambda).powi(2))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Monte-Carlo estimate of the denoising score-matching loss with
/// `t ~ U[t_min, 1]` per example.
pub fn sm_loss<S: ScoreFn + ?Sized, R: Rng + ?Sized>(
    model: &S,
    sched: &NoiseSchedule,
    batch: &[FrameMatrix],
    rng: &mut R,
) -> Result<f64> {
    let draws = draw_noise(batch, DEFAULT_T_MIN, rng);
    sm_loss_with_draws(model, sched, batch, &draws)
}

/// Root mean square over every entry of the corpus.
pub fn corpus_rms(corpus: &[FrameMatrix]) -> f64 {
    let (sum, n) = corpus.iter().fold((0.0, 0usize), |(s, n), x| {
        (s + x.as_slice().iter().map(|v| v * v).sum::<f64>(), n + x.as_slice().len())
    });
    if n == 0 {
        1.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Minibatch training on unlabeled frame chunks.
pub fn train_score<R: Rng + ?Sized>(
    net: &mut ScoreNetwork,
    corpus: &[FrameMatrix],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainingReport> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(domain("score training corpus is empty"));
    }
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, net.num_params());
    let mut monitor = LossMonitor::new();
    let mut report = TrainingReport::default();
    for _ in 0..config.epochs {
        let order = shuffled(corpus.len(), rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<FrameMatrix> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let draws = draw_noise(&batch, config.t_min, rng);
            let (loss, grad) = net.loss_and_grad(&batch, &draws)?;
            monitor.record(loss, &grad)?;
            opt.step(net.net.mlp.params_mut(), &grad);
        }
        report.epoch_losses.push(monitor.end_epoch());
    }
    Ok(report)
}
