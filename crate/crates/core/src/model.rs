//! Interfaces the sampler and evaluators consume. Both the analytic mixture
//! oracle and the trained networks implement them.

use crate::error::Result;
use crate::frame::FrameMatrix;
use crate::labels::FrameLabels;

/// An estimate of `grad_x log p_t(x)`.
pub trait ScoreFn {
    /// Number of channels per frame this model expects.
    fn dims(&self) -> usize;

    fn score(&self, xt: &FrameMatrix, t: f64) -> Result<FrameMatrix>;
}

/// A noisy-input frame classifier usable for guidance.
pub trait ClassifierGrad {
    fn classes(&self) -> usize;

    /// `grad_x log p_t(labels | x)`, summed over frames.
    fn log_prob_grad(&self, xt: &FrameMatrix, labels: &FrameLabels, t: f64) -> Result<FrameMatrix>;
}

/// Per-frame class posteriors, used for decoding and accuracy measurements.
pub trait FramePosterior {
    fn classes(&self) -> usize;

    /// Row `f` holds `p(label_f = k | x_f, t)` for each class `k`.
    fn frame_posteriors(&self, xt: &FrameMatrix, t: f64) -> Result<Vec<Vec<f64>>>;
}

impl<T: ScoreFn + ?Sized> ScoreFn for &T {
    fn dims(&self) -> usize {
        (**self).dims()
    }

    fn score(&self, xt: &FrameMatrix, t: f64) -> Result<FrameMatrix> {
        (**self).score(xt, t)
    }
}

impl<T: ClassifierGrad + ?Sized> ClassifierGrad for &T {
    fn classes(&self) -> usize {
        (**self).classes()
    }

    fn log_prob_grad(&self, xt: &FrameMatrix, labels: &FrameLabels, t: f64) -> Result<FrameMatrix> {
        (**self).log_prob_grad(xt, labels, t)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = k;
        }
    }
    best
}
