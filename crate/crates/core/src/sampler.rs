//! Discretized reverse-time SDE sampler with optional classifier guidance.
//!
//! Steps run over `t = i / N` for `i = N, ..., 1`:
//!
//! ```text
//! X_{t-1/N} = X_t + (beta_t / N) (X_t / 2 + score) + sqrt(beta_t / N) z_t
//! ```
//!
//! Guidance replaces `score` by `score + s * grad` (fixed scale) or by
//! `score + s * (|score| / |grad|) * grad` (norm-based). Initial state and
//! per-step noise are drawn from `N(0, I / tau)`.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::frame::FrameMatrix;
use crate::labels::FrameLabels;
use crate::model::{ClassifierGrad, ScoreFn};
use crate::schedule::NoiseSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    None,
    FixedScale,
    NormBased,
}

impl std::str::FromStr for GuidanceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "fixed_scale" => Ok(Self::FixedScale),
            "norm_based" => Ok(Self::NormBased),
            other => Err(Error::Config(format!(
                "unknown guidance mode {other:?} (none | fixed_scale | norm_based)"
            ))),
        }
    }
}

impl GuidanceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::FixedScale => "fixed_scale",
            Self::NormBased => "norm_based",
        }
    }
}

/// Scope of the norms in norm-based guidance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScope {
    /// One Frobenius norm over the whole matrix per step.
    Global,
    /// One norm ratio per frame.
    PerFrame,
}

impl std::str::FromStr for NormScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "per_frame" => Ok(Self::PerFrame),
            other => Err(Error::Config(format!("unknown norm scope {other:?} (global | per_frame)"))),
        }
    }
}

impl NormScope {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Global => "global",
            Self::PerFrame => "per_frame",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// Reverse step count `N`.
    pub steps: usize,
    /// Temperature: noise variance is `1 / tau`.
    pub tau: f64,
    /// Gradient scale: constant in fixed-scale mode, reached at the final
    /// step of the ramp in norm-based mode.
    pub scale: f64,
    /// Fraction of the initial reverse steps run with zero gradient scale
    /// (norm-based mode only).
    pub ramp_hold: f64,
    pub mode: GuidanceMode,
    pub grad_norm_floor: f64,
    pub norm_scope: NormScope,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            tau: 1.5,
            scale: 0.3,
            ramp_hold: 0.2,
            mode: GuidanceMode::NormBased,
            grad_norm_floor: 1e-12,
            norm_scope: NormScope::Global,
        }
    }
}

impl GuidanceConfig {
    pub fn unconditional(steps: usize, tau: f64) -> Self {
        Self {
            steps,
            tau,
            mode: GuidanceMode::None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("guidance.steps must be >= 1".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("guidance.tau must be > 0, got {}", self.tau)));
        }
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::Config(format!("guidance.scale must be >= 0, got {}", self.scale)));
        }
        if !(0.0..1.0).contains(&self.ramp_hold) {
            return Err(Error::Config(format!(
                "guidance.ramp_hold must lie in [0, 1), got {}",
                self.ramp_hold
            )));
        }
        if !(self.grad_norm_floor.is_finite() && self.grad_norm_floor > 0.0) {
            return Err(Error::Config("guidance.grad_norm_floor must be > 0".into()));
        }
        Ok(())
    }
}

/// Gradient scale at reverse step `i` (`N` first, `1` last): zero for the
/// first `ceil(ramp_hold * N)` steps, then linear from zero up to `scale` at `i = 1`.
pub fn scale_schedule(i: usize, config: &GuidanceConfig) -> f64 {
    let n = config.steps;
    debug_assert!((1..=n).contains(&i));
    let hold = (config.ramp_hold * n as f64).ceil() as usize;
    let ramp = n.saturating_sub(hold);
    if i > ramp {
        return 0.0;
    }
    if ramp == 1 {
        return config.scale;
    }
    config.scale * (ramp - i) as f64 / (ramp - 1) as f64
}

fn step_coefficients(sched: &NoiseSchedule, t: f64, steps: usize) -> Result<(f64, f64)> {
    if steps == 0 {
        return Err(domain("reverse step count must be positive"));
    }
    let c = sched.beta_at(t)? / steps as f64;
    Ok((c, c.sqrt()))
}

/// One unguided reverse step.
pub fn reverse_step(
    sched: &NoiseSchedule,
    xt: &FrameMatrix,
    t: f64,
    score: &FrameMatrix,
    z: &FrameMatrix,
    steps: usize,
) -> Result<FrameMatrix> {
    score.ensure_shape(xt.shape())?;
    z.ensure_shape(xt.shape())?;
    let (c, sd) = step_coefficients(sched, t, steps)?;
    let data = xt
        .as_slice()
        .iter()
        .zip(score.as_slice())
        .zip(z.as_slice())
        .map(|((&x, &s), &n)| x + c * (0.5 * x + s) + sd * n)
        .collect();
    Ok(FrameMatrix::from_vec_unchecked(xt.frames(), xt.dims(), data))
}

/// Reverse step with effective score `score + s * grad`.
#[allow(clippy::too_many_arguments)]
pub fn guided_step_fixed(
    sched: &NoiseSchedule,
    xt: &FrameMatrix,
    t: f64,
    score: &FrameMatrix,
    grad: &FrameMatrix,
    s: f64,
    z: &FrameMatrix,
    steps: usize,
) -> Result<FrameMatrix> {
    grad.ensure_shape(xt.shape())?;
    if s == 0.0 {
        return reverse_step(sched, xt, t, score, z, steps);
    }
    let effective = score.zip_map(grad, |a, g| a + s * g)?;
    reverse_step(sched, xt, t, &effective, z, steps)
}

/// Guidance term of a norm-based step plus the statistics behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct NormGuidance {
    /// `None` when the scale is zero or every gradient norm fell below the floor.
    pub term: Option<FrameMatrix>,
    /// `|score| / |grad|` in the global scope; `NaN` when the floor was hit.
    pub alpha: f64,
    pub floor_hit: bool,
}

/// `s * alpha_t * grad` with `alpha_t = |score| / |grad|`.
pub fn norm_guidance_term(
    score: &FrameMatrix,
    grad: &FrameMatrix,
    s: f64,
    grad_norm_floor: f64,
    scope: NormScope,
) -> Result<NormGuidance> {
    grad.ensure_shape(score.shape())?;
    match scope {
        NormScope::Global => {
            let g = grad.frobenius_norm();
            if g < grad_norm_floor {
                return Ok(NormGuidance {
                    term: None,
                    alpha: f64::NAN,
                    floor_hit: true,
                });
            }
            let alpha = score.frobenius_norm() / g;
            let term = (s != 0.0).then(|| grad.scale(s * alpha));
            Ok(NormGuidance {
                term,
                alpha,
                floor_hit: false,
            })
        }
        NormScope::PerFrame => {
            let mut term = FrameMatrix::zeros(score.frames(), score.dims());
            let mut any = false;
            let mut hit = false;
            for f in 0..score.frames() {
                let g = grad.row(f).iter().map(|v| v * v).sum::<f64>().sqrt();
                if g < grad_norm_floor {
                    hit = true;
                    continue;
                }
                any = true;
                let sn = score.row(f).iter().map(|v| v * v).sum::<f64>().sqrt();
                let k = s * sn / g;
                for (o, gv) in term.row_mut(f).iter_mut().zip(grad.row(f)) {
                    *o = k * gv;
                }
            }
            Ok(NormGuidance {
                term: (any && s != 0.0).then_some(term),
                alpha: f64::NAN,
                floor_hit: hit,
            })
        }
    }
}

/// Reverse step with the classifier gradient rescaled to norm `s * |score|`.
/// A gradient whose norm is below `grad_norm_floor` contributes nothing.
#[allow(clippy::too_many_arguments)]
pub fn norm_guided_step(
    sched: &NoiseSchedule,
    xt: &FrameMatrix,
    t: f64,
    score: &FrameMatrix,
    grad: &FrameMatrix,
    s: f64,
    z: &FrameMatrix,
    steps: usize,
    grad_norm_floor: f64,
) -> Result<FrameMatrix> {
    let g = norm_guidance_term(score, grad, s, grad_norm_floor, NormScope::Global)?;
    apply_term(sched, xt, t, score, g.term.as_ref(), z, steps)
}

fn apply_term(
    sched: &NoiseSchedule,
    xt: &FrameMatrix,
    t: f64,
    score: &FrameMatrix,
    term: Option<&FrameMatrix>,
    z: &FrameMatrix,
    steps: usize,
) -> Result<FrameMatrix> {
    match term {
        None => reverse_step(sched, xt, t, score, z, steps),
        Some(term) => {
            let effective = score.zip_map(term, |a, g| a + g)?;
            reverse_step(sched, xt, t, &effective, z, steps)
        }
    }
}

/// Source of the initial state and per-step noise of a reverse trajectory.
pub trait NoiseSource {
    fn initial(&mut self, frames: usize, dims: usize) -> FrameMatrix;
    /// Noise for reverse step `i`.
    fn step(&mut self, i: usize, frames: usize, dims: usize) -> FrameMatrix;
}

/// `N(0, I / tau)` draws straight from an RNG, row-major.
pub struct TemperedNoise<'a, R: ?Sized> {
    rng: &'a mut R,
    std: f64,
}

impl<'a, R: Rng + ?Sized> TemperedNoise<'a, R> {
    pub fn new(rng: &'a mut R, tau: f64) -> Self {
        Self {
            rng,
            std: 1.0 / tau.sqrt(),
        }
    }
}

impl<R: Rng + ?Sized> NoiseSource for TemperedNoise<'_, R> {
    fn initial(&mut self, frames: usize, dims: usize) -> FrameMatrix {
        FrameMatrix::gaussian(frames, dims, self.std, self.rng)
    }

    fn step(&mut self, _i: usize, frames: usize, dims: usize) -> FrameMatrix {
        FrameMatrix::gaussian(frames, dims, self.std, self.rng)
    }
}

/// A classifier and the frame labels to steer towards.
#[derive(Clone, Copy)]
pub struct Guide<'a> {
    pub classifier: &'a dyn ClassifierGrad,
    pub labels: &'a FrameLabels,
}

/// Per-step diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub s: f64,
    pub score_norm: f64,
    /// Zero when the sampler ran unguided.
    pub grad_norm: f64,
    /// Norm-ratio multiplier of norm-based guidance; `NaN` otherwise.
    pub alpha: f64,
    /// Norm of the term added to the score.
    pub guidance_norm: f64,
    pub floor_hit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput {
    pub x0: FrameMatrix,
    pub trajectory: Vec<StepRecord>,
}

pub fn trajectory_csv(records: &[StepRecord]) -> String {
    let mut out = String::from("step,t,score_norm,grad_norm,alpha,s,guidance_norm\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step, r.t, r.score_norm, r.grad_norm, r.alpha, r.s, r.guidance_norm
        );
    }
    out
}

/// Draws `X_0` with a fresh `N(0, I / tau)` noise stream from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn sample<S, R>(
    score: &S,
    guide: Option<Guide<'_>>,
    sched: &NoiseSchedule,
    config: &GuidanceConfig,
    frames: usize,
    dims: usize,
    rng: &mut R,
) -> Result<SampleOutput>
where
    S: ScoreFn + ?Sized,
    R: Rng + ?Sized,
{
    let mut noise = TemperedNoise::new(rng, config.tau);
    sample_with_noise(score, guide, sched, config, frames, dims, &mut noise)
}

/// [`sample`] with an explicit noise source.
pub fn sample_with_noise<S, N>(
    score: &S,
    guide: Option<Guide<'_>>,
    sched: &NoiseSchedule,
    config: &GuidanceConfig,
    frames: usize,
    dims: usize,
    noise: &mut N,
) -> Result<SampleOutput>
where
    S: ScoreFn + ?Sized,
    N: NoiseSource + ?Sized,
{
    config.validate()?;
    if frames == 0 || dims == 0 {
        return Err(domain("sample shape must be at least 1x1"));
    }
    if score.dims() != dims {
        return Err(Error::Config(format!(
            "score model has {} channels, sample requested {dims}",
            score.dims()
        )));
    }
    let guide = match (config.mode, guide) {
        (GuidanceMode::None, _) => None,
        (_, None) => {
            return Err(Error::Config(format!(
                "guidance mode {} needs a classifier and frame labels",
                config.mode.as_str()
            )))
        }
        (_, Some(g)) => {
            if g.labels.len() != frames {
                return Err(Error::Config(format!(
                    "{} frame labels for {frames} frames",
                    g.labels.len()
                )));
            }
            g.labels.validate(g.classifier.classes())?;
            Some(g)
        }
    };

    let n = config.steps;
    let mut x = noise.initial(frames, dims);
    let mut trajectory = Vec::with_capacity(n);
    for i in (1..=n).rev() {
        let t = i as f64 / n as f64;
        let sc = score.score(&x, t)?;
        let score_norm = sc.frobenius_norm();
        let mut record = StepRecord {
            step: i,
            t,
            s: 0.0,
            score_norm,
            grad_norm: 0.0,
            alpha: f64::NAN,
            guidance_norm: 0.0,
            floor_hit: false,
        };
        let z = noise.step(i, frames, dims);
        x = match guide {
            None => reverse_step(sched, &x, t, &sc, &z, n)?,
            Some(g) => {
                let s = match config.mode {
                    GuidanceMode::FixedScale => config.scale,
                    _ => scale_schedule(i, config),
                };
                let grad = g.classifier.log_prob_grad(&x, g.labels, t)?;
                record.s = s;
                record.grad_norm = grad.frobenius_norm();
                match config.mode {
                    GuidanceMode::FixedScale => {
                        record.guidance_norm = s * record.grad_norm;
                        guided_step_fixed(sched, &x, t, &sc, &grad, s, &z, n)?
                    }
                    GuidanceMode::NormBased => {
                        let ng = norm_guidance_term(&sc, &grad, s, config.grad_norm_floor, config.norm_scope)?;
                        record.alpha = ng.alpha;
                        record.floor_hit = ng.floor_hit;
                        record.guidance_norm = ng.term.as_ref().map_or(0.0, FrameMatrix::frobenius_norm);
                        if config.norm_scope == NormScope::Global && !ng.floor_hit {
                            debug_assert!(
                                (record.guidance_norm - s * score_norm).abs() <= 1e-9 * s * score_norm + f64::MIN_POSITIVE,
                                "norm contract violated at step {i}"
                            );
                        }
                        apply_term(sched, &x, t, &sc, ng.term.as_ref(), &z, n)?
                    }
                    GuidanceMode::None => unreachable!("unguided mode has no guide"),
                }
            }
        };
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("sampler state after step {i} (t = {t})")));
        }
        trajectory.push(record);
    }
    Ok(SampleOutput { x0: x, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{MixtureOracle, MixtureSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> FrameMatrix {
        FrameMatrix::filled(1, 1, v)
    }

    /// A time with `beta_t = 1` under the default schedule.
    fn t_beta_one(s: &NoiseSchedule) -> f64 {
        (1.0 - s.beta0()) / (s.beta1() - s.beta0())
    }

    #[test]
    fn reverse_step_arithmetic() {
        let s = NoiseSchedule::default();
        let t = t_beta_one(&s);
        let out = reverse_step(&s, &scalar(1.0), t, &scalar(-2.0), &scalar(0.0), 100).unwrap();
        assert!((out.get(0, 0) - 0.985).abs() < 1e-15);
        let out = reverse_step(&s, &scalar(0.7), t, &scalar(0.0), &scalar(0.0), 100).unwrap();
        assert!((out.get(0, 0) - 0.7 * (1.0 + 1.0 / 200.0)).abs() < 1e-15);
        assert!(reverse_step(&s, &FrameMatrix::zeros(2, 1), t, &scalar(0.0), &scalar(0.0), 10).is_err());
    }

    #[test]
    fn fixed_scale_reductions() {
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = FrameMatrix::gaussian(3, 2, 1.0, &mut rng);
        let sc = FrameMatrix::gaussian(3, 2, 1.0, &mut rng);
        let g = FrameMatrix::gaussian(3, 2, 1.0, &mut rng);
        let z = FrameMatrix::gaussian(3, 2, 1.0, &mut rng);
        let base = reverse_step(&s, &x, 0.4, &sc, &z, 50).unwrap();
        assert_eq!(guided_step_fixed(&s, &x, 0.4, &sc, &g, 0.0, &z, 50).unwrap(), base);
        assert_eq!(
            guided_step_fixed(&s, &x, 0.4, &sc, &FrameMatrix::zeros(3, 2), 2.5, &z, 50).unwrap(),
            base
        );
        assert_eq!(norm_guided_step(&s, &x, 0.4, &sc, &g, 0.0, &z, 50, 1e-12).unwrap(), base);
        let tiny = g.scale(1e-14);
        assert_eq!(norm_guided_step(&s, &x, 0.4, &sc, &tiny, 0.3, &z, 50, 1e-12).unwrap(), base);
    }

    #[test]
    fn norm_guidance_arithmetic() {
        let sc = FrameMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let g = FrameMatrix::from_rows(&[vec![0.0, 2.0]]).unwrap();
        let ng = norm_guidance_term(&sc, &g, 0.3, 1e-12, NormScope::Global).unwrap();
        assert_eq!(ng.alpha, 2.5);
        let term = ng.term.unwrap();
        assert_eq!(term.as_slice()[0], 0.0);
        assert!((term.as_slice()[1] - 1.5).abs() < 1e-15);
        assert!((term.frobenius_norm() - 0.3 * 5.0).abs() < 1e-15);
    }

    #[test]
    fn per_frame_scope_balances_each_frame() {
        let sc = FrameMatrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 1.0]]).unwrap();
        let g = FrameMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let ng = norm_guidance_term(&sc, &g, 0.5, 1e-12, NormScope::PerFrame).unwrap();
        assert!(ng.floor_hit);
        let term = ng.term.unwrap();
        assert_eq!(term.row(0), &[2.5, 0.0]);
        assert_eq!(term.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn schedule_examples() {
        let cfg = GuidanceConfig::default();
        assert_eq!(scale_schedule(cfg.steps, &cfg), 0.0);
        assert_eq!(scale_schedule(1, &cfg), 0.3);
        // Non-decreasing in reverse order.
        let mut prev = 0.0;
        for i in (1..=cfg.steps).rev() {
            let s = scale_schedule(i, &cfg);
            assert!(s >= prev);
            prev = s;
        }
        // First ceil(0.2 * 50) = 10 steps held at zero.
        assert!((41..=50).all(|i| scale_schedule(i, &cfg) == 0.0));
        let two = GuidanceConfig {
            steps: 2,
            ramp_hold: 0.0,
            scale: 0.7,
            ..cfg.clone()
        };
        assert_eq!(scale_schedule(2, &two), 0.0);
        assert_eq!(scale_schedule(1, &two), 0.7);
        let one = GuidanceConfig {
            steps: 1,
            ramp_hold: 0.0,
            ..cfg
        };
        assert_eq!(scale_schedule(1, &one), 0.3);
    }

    #[test]
    fn config_validation() {
        let ok = GuidanceConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            GuidanceConfig { tau: 0.0, ..ok.clone() },
            GuidanceConfig { steps: 0, ..ok.clone() },
            GuidanceConfig { ramp_hold: 1.0, ..ok.clone() },
            GuidanceConfig { scale: -0.1, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    fn oracle() -> MixtureOracle {
        let spec = MixtureSpec::isotropic(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], 0.2).unwrap();
        MixtureOracle::new(spec, NoiseSchedule::default())
    }

    #[test]
    fn guided_mode_requires_classifier() {
        let o = oracle();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GuidanceConfig::default();
        let err = sample(&o, None, &o.sched, &cfg, 4, 2, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let labels = FrameLabels::new(vec![0, 1, 0], 2).unwrap();
        let g = Guide {
            classifier: &o,
            labels: &labels,
        };
        assert!(sample(&o, Some(g), &o.sched, &cfg, 4, 2, &mut rng).is_err());
    }

    #[test]
    fn disabled_guidance_is_bit_identical() {
        let o = oracle();
        let labels = FrameLabels::new(vec![0, 1, 1, 0], 2).unwrap();
        let g = Guide {
            classifier: &o,
            labels: &labels,
        };
        let base_cfg = GuidanceConfig::unconditional(20, 1.5);
        let base = sample(&o, None, &o.sched, &base_cfg, 4, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for mode in [GuidanceMode::NormBased, GuidanceMode::FixedScale] {
            let cfg = GuidanceConfig {
                mode,
                scale: 0.0,
                ..base_cfg.clone()
            };
            let out = sample(&o, Some(g), &o.sched, &cfg, 4, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            assert_eq!(out.x0, base.x0);
        }
    }

    #[test]
    fn norm_contract_holds_along_trajectory() {
        let o = oracle();
        let labels = FrameLabels::new(vec![0, 1, 1, 0, 0], 2).unwrap();
        let g = Guide {
            classifier: &o,
            labels: &labels,
        };
        let cfg = GuidanceConfig::default();
        let out = sample(&o, Some(g), &o.sched, &cfg, 5, 2, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(out.trajectory.len(), 50);
        for r in out.trajectory.iter().filter(|r| !r.floor_hit && r.s > 0.0) {
            assert!((r.guidance_norm / r.score_norm - r.s).abs() <= 1e-9 * r.s);
        }
        let csv = trajectory_csv(&out.trajectory);
        assert_eq!(csv.lines().count(), 51);
    }

    #[test]
    fn sampling_is_deterministic() {
        let o = oracle();
        let cfg = GuidanceConfig::unconditional(10, 1.0);
        let a = sample(&o, None, &o.sched, &cfg, 3, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample(&o, None, &o.sched, &cfg, 3, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.x0, b.x0);
        assert_eq!(trajectory_csv(&a.trajectory), trajectory_csv(&b.trajectory));
    }
}
