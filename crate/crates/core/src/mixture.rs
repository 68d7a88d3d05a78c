//! Analytic ground truth for frame-independent isotropic Gaussian mixtures.
//!
//! Every component is pushed through the forward process in closed form, so
//! the unconditional score, the frame-wise class posterior, its input gradient
//! and the conditional score are all exact. Frames are independent given their
//! labels; everything below factorizes per frame.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::frame::FrameMatrix;
use crate::labels::FrameLabels;
use crate::model::{ClassifierGrad, FramePosterior, ScoreFn};
use crate::schedule::{Marginal, NoiseSchedule};

/// Per-class isotropic Gaussian emissions with class priors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct MixtureSpec {
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
    priors: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
    priors: Vec<f64>,
}

impl TryFrom<RawMixture> for MixtureSpec {
    type Error = Error;
    fn try_from(r: RawMixture) -> Result<Self> {
        MixtureSpec::new(r.means, r.variances, r.priors)
    }
}

impl From<MixtureSpec> for RawMixture {
    fn from(m: MixtureSpec) -> Self {
        RawMixture {
            means: m.means,
            variances: m.variances,
            priors: m.priors,
        }
    }
}

/// Component parameters of `p_t`: means `alpha_t mu_k`, variances `alpha_t^2 sigma_k^2 + lambda(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalParams {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(means: Vec<Vec<f64>>, variances: Vec<f64>, priors: Vec<f64>) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(Error::Config("mixture needs at least one class".into()));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(Error::Config("mixture means must share a positive dimension".into()));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("mixture means must be finite".into()));
        }
        if variances.len() != k || priors.len() != k {
            return Err(Error::Config(format!(
                "mixture has {k} means but {} variances and {} priors",
                variances.len(),
                priors.len()
            )));
        }
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Config(format!("mixture variances must be positive, got {v}")));
        }
        if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config("mixture priors must be non-negative".into()));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("mixture priors sum to {total}, not 1")));
        }
        Ok(Self {
            means,
            variances,
            priors,
        })
    }

    /// Equal priors and a shared standard deviation.
    pub fn isotropic(means: Vec<Vec<f64>>, std: f64) -> Result<Self> {
        let k = means.len();
        Self::new(means, vec![std * std; k], vec![1.0 / k as f64; k])
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn dims(&self) -> usize {
        self.means[0].len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn marginal_params(&self, sched: &NoiseSchedule, t: f64) -> Result<MarginalParams> {
        let m = sched.marginal(t)?;
        Ok(self.params_at(&m))
    }

    fn params_at(&self, m: &Marginal) -> MarginalParams {
        let a2 = m.alpha * m.alpha;
        MarginalParams {
            means: self
                .means
                .iter()
                .map(|mu| mu.iter().map(|v| m.alpha * v).collect())
                .collect(),
            variances: self.variances.iter().map(|s2| a2 * s2 + m.lambda).collect(),
        }
    }

    /// Draws one frame from class `label`.
    pub fn sample_frame<R: Rng + ?Sized>(&self, label: usize, rng: &mut R) -> Vec<f64> {
        let sd = self.variances[label].sqrt();
        self.means[label]
            .iter()
            .map(|mu| mu + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Draws a frame matrix whose frame `f` comes from class `labels[f]`.
    pub fn sample_frames<R: Rng + ?Sized>(&self, labels: &FrameLabels, rng: &mut R) -> Result<FrameMatrix> {
        labels.validate(self.classes())?;
        let data = labels
            .ids()
            .iter()
            .flat_map(|&k| self.sample_frame(k, rng))
            .collect();
        Ok(FrameMatrix::from_vec_unchecked(labels.len(), self.dims(), data))
    }

    /// Draws a class from the priors.
    pub fn sample_class<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.priors, rng)
    }

    fn check_input(&self, xt: &FrameMatrix) -> Result<()> {
        if xt.dims() != self.dims() {
            return Err(Error::Shape {
                expected: (xt.frames(), self.dims()),
                got: xt.shape(),
            });
        }
        Ok(())
    }

    /// `sum_f log p_t(x_f)` by direct mixture-density evaluation.
    pub fn log_density(&self, sched: &NoiseSchedule, xt: &FrameMatrix, t: f64) -> Result<f64> {
        self.check_input(xt)?;
        let p = self.params_at(&sched.marginal(t)?);
        Ok(xt.rows().map(|x| log_sum_exp(&self.log_joint(&p, x))).sum())
    }

    /// `log w_k + log N(x; alpha mu_k, v_k I)` for every class.
    fn log_joint(&self, p: &MarginalParams, x: &[f64]) -> Vec<f64> {
        let d = x.len() as f64;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        p.means
            .iter()
            .zip(&p.variances)
            .zip(&self.priors)
            .map(|((mu, &v), &w)| {
                let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() - 0.5 * d * (ln_2pi + v.ln()) - 0.5 * sq / v
            })
            .collect()
    }

    fn posterior_row(&self, p: &MarginalParams, x: &[f64]) -> Vec<f64> {
        let lj = self.log_joint(p, x);
        let lse = log_sum_exp(&lj);
        lj.iter().map(|l| (l - lse).exp()).collect()
    }

    pub fn uncond_score(&self, sched: &NoiseSchedule, xt: &FrameMatrix, t: f64) -> Result<FrameMatrix> {
        self.check_input(xt)?;
        let p = self.params_at(&sched.marginal(t)?);
        let mut out = FrameMatrix::zeros(xt.frames(), xt.dims());
        for f in 0..xt.frames() {
            let x = xt.row(f);
            let r = self.posterior_row(&p, x);
            let row = out.row_mut(f);
            for (k, (mu, &v)) in p.means.iter().zip(&p.variances).enumerate() {
                for d in 0..x.len() {
                    row[d] -= r[k] * (x[d] - mu[d]) / v;
                }
            }
        }
        Ok(out)
    }

    pub fn class_posterior(&self, sched: &NoiseSchedule, xt: &FrameMatrix, t: f64) -> Result<Vec<Vec<f64>>> {
        self.check_input(xt)?;
        let p = self.params_at(&sched.marginal(t)?);
        Ok(xt.rows().map(|x| self.posterior_row(&p, x)).collect())
    }

    /// `grad_x sum_f log p_t(labels_f | x_f)`: per frame, the labelled
    /// component's score minus the posterior-averaged component score.
    pub fn class_posterior_grad(
        &self,
        sched: &NoiseSchedule,
        xt: &FrameMatrix,
        labels: &FrameLabels,
        t: f64,
    ) -> Result<FrameMatrix> {
        self.check_input(xt)?;
        self.check_labels(xt, labels)?;
        let p = self.params_at(&sched.marginal(t)?);
        let mut out = FrameMatrix::zeros(xt.frames(), xt.dims());
        for (f, &y) in labels.ids().iter().enumerate() {
            let x = xt.row(f);
            let r = self.posterior_row(&p, x);
            let row = out.row_mut(f);
            for (k, (mu, &v)) in p.means.iter().zip(&p.variances).enumerate() {
                let weight = if k == y { 1.0 - r[k] } else { -r[k] };
                if weight == 0.0 {
                    continue;
                }
                for d in 0..x.len() {
                    row[d] -= weight * (x[d] - mu[d]) / v;
                }
            }
        }
        Ok(out)
    }

    /// Closed-form `grad_x log p_t(x | labels)`: each frame's labelled component score.
    pub fn cond_score(
        &self,
        sched: &NoiseSchedule,
        xt: &FrameMatrix,
        labels: &FrameLabels,
        t: f64,
    ) -> Result<FrameMatrix> {
        self.check_input(xt)?;
        self.check_labels(xt, labels)?;
        let p = self.params_at(&sched.marginal(t)?);
        let mut out = FrameMatrix::zeros(xt.frames(), xt.dims());
        for (f, &y) in labels.ids().iter().enumerate() {
            let x = xt.row(f);
            let (mu, v) = (&p.means[y], p.variances[y]);
            for (o, (a, b)) in out.row_mut(f).iter_mut().zip(x.iter().zip(mu)) {
                *o = -(a - b) / v;
            }
        }
        Ok(out)
    }

    fn check_labels(&self, xt: &FrameMatrix, labels: &FrameLabels) -> Result<()> {
        if labels.len() != xt.frames() {
            return Err(domain(format!(
                "{} labels for {} frames",
                labels.len(),
                xt.frames()
            )));
        }
        labels.validate(self.classes())
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// A mixture bound to a schedule, usable wherever a score model or a
/// classifier is expected.
#[derive(Clone, Debug)]
pub struct MixtureOracle {
    pub spec: MixtureSpec,
    pub sched: NoiseSchedule,
}

impl MixtureOracle {
    pub fn new(spec: MixtureSpec, sched: NoiseSchedule) -> Self {
        Self { spec, sched }
    }

    /// The oracle conditional score as a standalone score model.
    pub fn conditional(&self, labels: FrameLabels) -> ConditionalOracle<'_> {
        ConditionalOracle { oracle: self, labels }
    }
}

impl ScoreFn for MixtureOracle {
    fn dims(&self) -> usize {
        self.spec.dims()
    }

    fn score(&self, xt: &FrameMatrix, t: f64) -> Result<FrameMatrix> {
        self.spec.uncond_score(&self.sched, xt, t)
    }
}

impl ClassifierGrad for MixtureOracle {
    fn classes(&self) -> usize {
        self.spec.classes()
    }

    fn log_prob_grad(&self, xt: &FrameMatrix, labels: &FrameLabels, t: f64) -> Result<FrameMatrix> {
        self.spec.class_posterior_grad(&self.sched, xt, labels, t)
    }
}

impl FramePosterior for MixtureOracle {
    fn classes(&self) -> usize {
        self.spec.classes()
    }

    fn frame_posteriors(&self, xt: &FrameMatrix, t: f64) -> Result<Vec<Vec<f64>>> {
        self.spec.class_posterior(&self.sched, xt, t)
    }
}

/// `grad log p_t(x | labels)` assembled as unconditional score plus posterior
/// gradient, the same sum the fixed-scale guided sampler forms at `s = 1`.
#[derive(Clone, Debug)]
pub struct ConditionalOracle<'a> {
    oracle: &'a MixtureOracle,
    labels: FrameLabels,
}

impl ConditionalOracle<'_> {
    /// The closed-form per-component score, for comparison.
    pub fn closed_form(&self, xt: &FrameMatrix, t: f64) -> Result<FrameMatrix> {
        self.oracle.spec.cond_score(&self.oracle.sched, xt, &self.labels, t)
    }
}

impl ScoreFn for ConditionalOracle<'_> {
    fn dims(&self) -> usize {
        self.oracle.spec.dims()
    }

    fn score(&self, xt: &FrameMatrix, t: f64) -> Result<FrameMatrix> {
        let uncond = self.oracle.score(xt, t)?;
        let grad = self.oracle.log_prob_grad(xt, &self.labels, t)?;
        uncond.zip_map(&grad, |s, g| s + g)
    }
}
