//! Score-norm and classifier-gradient-norm profiles over diffusion time, and
//! classifier accuracy profiles. Output is plain CSV for external plotting.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::LabeledFrames;
use crate::error::{domain, Result};
use crate::model::{argmax, ClassifierGrad, FramePosterior, ScoreFn};
use crate::schedule::NoiseSchedule;

/// Evaluation times in `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeGrid {
    /// `(2j + 1) / 2n` for `j = 0..n`; `Midpoints(1000)` gives `1/2000, 3/2000, ..., 1999/2000`.
    Midpoints(usize),
    Explicit(Vec<f64>),
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            TimeGrid::Midpoints(n) => (0..*n).map(|j| (2 * j + 1) as f64 / (2 * n) as f64).collect(),
            TimeGrid::Explicit(ts) => ts.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub t: f64,
    pub score_norm: f64,
    pub grad_norm: f64,
    /// `score_norm / grad_norm`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub t: f64,
    pub accuracy: f64,
}

/// Mean Frobenius norms of the score and of the classifier gradient for
/// inputs corrupted to each grid time. Examples are corrupted in order, one
/// fresh draw per (time, example).
pub fn norm_profile<S, C, R>(
    score: &S,
    classifier: &C,
    sched: &NoiseSchedule,
    eval_set: &[LabeledFrames],
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Vec<NormRow>>
where
    S: ScoreFn + ?Sized,
    C: ClassifierGrad + ?Sized,
    R: Rng + ?Sized,
{
    if eval_set.is_empty() {
        return Err(domain("norm profile needs a non-empty evaluation set"));
    }
    let n = eval_set.len() as f64;
    grid.points()
        .into_iter()
        .map(|t| {
            let (mut s_sum, mut g_sum) = (0.0, 0.0);
            for ex in eval_set {
                let (xt, _) = sched.forward_sample(&ex.frames, t, rng)?;
                s_sum += score.score(&xt, t)?.frobenius_norm();
                g_sum += classifier.log_prob_grad(&xt, &ex.labels, t)?.frobenius_norm();
            }
            let (score_norm, grad_norm) = (s_sum / n, g_sum / n);
            Ok(NormRow {
                t,
                score_norm,
                grad_norm,
                ratio: score_norm / grad_norm,
            })
        })
        .collect()
}

/// Fraction of frames whose posterior argmax equals the true label after
/// corruption to each grid time.
pub fn accuracy_profile<C, R>(
    classifier: &C,
    sched: &NoiseSchedule,
    eval_set: &[LabeledFrames],
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Vec<AccuracyRow>>
where
    C: FramePosterior + ?Sized,
    R: Rng + ?Sized,
{
    if eval_set.is_empty() {
        return Err(domain("accuracy profile needs a non-empty evaluation set"));
    }
    grid.points()
        .into_iter()
        .map(|t| {
            let (mut hit, mut total) = (0usize, 0usize);
            for ex in eval_set {
                let (xt, _) = sched.forward_sample(&ex.frames, t, rng)?;
                let post = classifier.frame_posteriors(&xt, t)?;
                for (row, &y) in post.iter().zip(ex.labels.ids()) {
                    hit += usize::from(argmax(row) == y);
                    total += 1;
                }
            }
            Ok(AccuracyRow {
                t,
                accuracy: hit as f64 / total as f64,
            })
        })
        .collect()
}

pub fn norm_csv(rows: &[NormRow]) -> String {
    let mut out = String::from("t,score_norm,grad_norm,ratio\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.t, r.score_norm, r.grad_norm, r.ratio);
    }
    out
}

pub fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let mut out = String::from("t,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.t, r.accuracy);
    }
    out
}
