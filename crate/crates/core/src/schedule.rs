//! Linear variance-preserving noise schedule and the closed-form forward
//! marginal `X_t | X_0 ~ N(alpha_t X_0, lambda(t) I)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::frame::FrameMatrix;

pub const DEFAULT_BETA0: f64 = 0.05;
pub const DEFAULT_BETA1: f64 = 20.0;

/// `beta_t = beta0 + (beta1 - beta0) t` on the unit horizon `t in [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    beta0: f64,
    beta1: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            beta0: DEFAULT_BETA0,
            beta1: DEFAULT_BETA1,
        }
    }
}

/// Every schedule quantity at one diffusion time, computed once per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Marginal {
    pub t: f64,
    pub beta: f64,
    /// Mean scale of the forward marginal.
    pub alpha: f64,
    /// Variance of the forward marginal, `1 - alpha^2`.
    pub lambda: f64,
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(domain(format!("diffusion time {t} outside [0, 1]")))
    }
}

impl NoiseSchedule {
    pub fn new(beta0: f64, beta1: f64) -> Result<Self> {
        if !(beta0.is_finite() && beta0 > 0.0) {
            return Err(Error::Config(format!("beta0 must be positive, got {beta0}")));
        }
        if !(beta1.is_finite() && beta1 >= beta0) {
            return Err(Error::Config(format!(
                "beta1 must be finite and >= beta0 ({beta0}), got {beta1}"
            )));
        }
        Ok(Self { beta0, beta1 })
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta_at(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.beta0 + (self.beta1 - self.beta0) * t)
    }

    /// `B(t) = int_0^t beta_s ds`.
    pub fn beta_integral(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.beta0 * t + 0.5 * (self.beta1 - self.beta0) * t * t)
    }

    pub fn alpha_at(&self, t: f64) -> Result<f64> {
        Ok((-0.5 * self.beta_integral(t)?).exp())
    }

    pub fn lambda_at(&self, t: f64) -> Result<f64> {
        Ok(-(-self.beta_integral(t)?).exp_m1())
    }

    pub fn marginal(&self, t: f64) -> Result<Marginal> {
        let b = self.beta_integral(t)?;
        Ok(Marginal {
            t,
            beta: self.beta0 + (self.beta1 - self.beta0) * t,
            alpha: (-0.5 * b).exp(),
            lambda: -(-b).exp_m1(),
        })
    }

    /// Corrupts `x0` to time `t`. Returns `(x_t, eps)` where `eps = x_t - alpha_t x0`
    /// is the perturbation actually added, distributed `N(0, lambda(t) I)`.
    ///
    /// One standard normal is drawn per entry in row-major order, including at
    /// `t = 0` where the draw is multiplied by zero.
    pub fn forward_sample<R: Rng + ?Sized>(
        &self,
        x0: &FrameMatrix,
        t: f64,
        rng: &mut R,
    ) -> Result<(FrameMatrix, FrameMatrix)> {
        let m = self.marginal(t)?;
        let z = FrameMatrix::gaussian(x0.frames(), x0.dims(), 1.0, rng);
        Ok(corrupt_with(x0, &m, &z))
    }

    /// `-eps / lambda(t)`, the score of `p_t(x_t | x_0)` at the sample that produced `eps`.
    pub fn score_target(&self, eps: &FrameMatrix, t: f64) -> Result<FrameMatrix> {
        let lambda = self.lambda_at(t)?;
        if lambda <= 0.0 {
            return Err(Error::Singular(t));
        }
        Ok(eps.map(|e| -e / lambda))
    }
}

/// Deterministic half of [`NoiseSchedule::forward_sample`]: applies a given
/// standard-normal draw `z`.
pub fn corrupt_with(x0: &FrameMatrix, m: &Marginal, z: &FrameMatrix) -> (FrameMatrix, FrameMatrix) {
    let sd = m.lambda.sqrt();
    let eps = z.scale(sd);
    let xt = x0
        .zip_map(&eps, |x, e| m.alpha * x + e)
        .expect("noise draw has the shape of x0");
    (xt, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Adaptive Simpson quadrature; test oracle for the closed-form integral.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            let c = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let c = 0.5 * (a + b);
            let left = simpson(f, a, c);
            let right = simpson(f, c, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, c, left, tol / 2.0, depth - 1) + rec(f, c, b, right, tol / 2.0, depth - 1)
            }
        }
        rec(f, a, b, simpson(f, a, b), tol, 40)
    }

    fn quad_b(s: &NoiseSchedule, t: f64) -> f64 {
        adaptive_simpson(&|u| s.beta_at(u).unwrap(), 0.0, t, 1e-13)
    }

    #[test]
    fn beta_endpoints_and_midpoint() {
        let s = NoiseSchedule::default();
        assert_eq!(s.beta_at(0.0).unwrap(), 0.05);
        assert_eq!(s.beta_at(1.0).unwrap(), 20.0);
        assert!((s.beta_at(0.5).unwrap() - 10.025).abs() < 1e-12);
    }

    #[test]
    fn beta_integral_matches_quadrature() {
        let s = NoiseSchedule::default();
        assert_eq!(s.beta_integral(0.0).unwrap(), 0.0);
        let q1 = quad_b(&s, 1.0);
        let q5 = quad_b(&s, 0.5);
        assert!((q1 - 10.025).abs() < 1e-10);
        assert!((q5 - 2.51875).abs() < 1e-10);
        assert!((s.beta_integral(1.0).unwrap() - q1).abs() < 1e-10);
        assert!((s.beta_integral(0.5).unwrap() - q5).abs() < 1e-10);
    }

    #[test]
    fn lambda_reference_values() {
        let s = NoiseSchedule::default();
        assert_eq!(s.alpha_at(0.0).unwrap(), 1.0);
        assert_eq!(s.lambda_at(0.0).unwrap(), 0.0);
        let l1 = 1.0 - (-quad_b(&s, 1.0)).exp();
        let l5 = 1.0 - (-quad_b(&s, 0.5)).exp();
        assert!((l1 - 0.9999557).abs() < 1e-6);
        assert!((l5 - 0.91944).abs() < 1e-5);
        assert!((s.lambda_at(1.0).unwrap() - l1).abs() < 1e-6);
        assert!((s.lambda_at(0.5).unwrap() - l5).abs() < 1e-6);
    }

    #[test]
    fn grid_identities() {
        let s = NoiseSchedule::default();
        let mut prev = -1.0;
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            let m = s.marginal(t).unwrap();
            assert!((m.alpha * m.alpha + m.lambda - 1.0).abs() < 1e-12, "t={t}");
            assert!((0.0..1.0).contains(&m.lambda));
            assert!(m.lambda > prev, "lambda not increasing at t={t}");
            prev = m.lambda;
        }
    }

    #[test]
    fn out_of_domain_times_rejected() {
        let s = NoiseSchedule::default();
        for t in [-1e-9, 1.0 + 1e-9, f64::NAN] {
            assert!(matches!(s.beta_at(t), Err(Error::Domain(_))));
            assert!(s.lambda_at(t).is_err());
        }
        assert!(NoiseSchedule::new(0.0, 1.0).is_err());
        assert!(NoiseSchedule::new(2.0, 1.0).is_err());
    }

    #[test]
    fn forward_sample_identity_at_zero() {
        let s = NoiseSchedule::default();
        let x0 = FrameMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (xt, eps) = s.forward_sample(&x0, 0.0, &mut rng).unwrap();
        assert_eq!(xt, x0);
        assert!(eps.as_slice().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn zero_noise_scales_mean() {
        let s = NoiseSchedule::default();
        let x0 = FrameMatrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let m = s.marginal(0.3).unwrap();
        let (xt, _) = corrupt_with(&x0, &m, &FrameMatrix::zeros(1, 2));
        assert_eq!(xt.as_slice(), &[m.alpha, -2.0 * m.alpha]);
    }

    #[test]
    fn forward_sample_monte_carlo_mean() {
        let s = NoiseSchedule::default();
        let x0 = FrameMatrix::from_rows(&[vec![1.5, -0.7, 0.0]]).unwrap();
        let m = s.marginal(0.5).unwrap();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let (xt, _) = s.forward_sample(&x0, 0.5, &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(xt.as_slice()) {
                *a += v;
            }
        }
        let tol = 4.0 * (m.lambda / n as f64).sqrt();
        for (a, x) in acc.iter().zip(x0.as_slice()) {
            assert!((a / n as f64 - m.alpha * x).abs() < tol);
        }
    }

    #[test]
    fn forward_sample_reproducible() {
        let s = NoiseSchedule::default();
        let x0 = FrameMatrix::filled(3, 2, 0.25);
        let a = s.forward_sample(&x0, 0.4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = s.forward_sample(&x0, 0.4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn score_target_values() {
        let s = NoiseSchedule::default();
        let eps = FrameMatrix::zeros(2, 2);
        assert!(s.score_target(&eps, 0.5).unwrap().as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(s.score_target(&eps, 0.0), Err(Error::Singular(_))));

        // lambda(t) = 0.5 exactly where B(t) = ln 2.
        let b = 2f64.ln();
        let t = (-s.beta0() + (s.beta0().powi(2) + 2.0 * (s.beta1() - s.beta0()) * b).sqrt())
            / (s.beta1() - s.beta0());
        let one = FrameMatrix::filled(1, 1, 1.0);
        assert!((s.score_target(&one, t).unwrap().get(0, 0) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn score_target_is_conditional_gaussian_score() {
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = FrameMatrix::gaussian(4, 3, 1.0, &mut rng);
        for &t in &[0.01, 0.3, 0.9] {
            let (xt, eps) = s.forward_sample(&x0, t, &mut rng).unwrap();
            let m = s.marginal(t).unwrap();
            let analytic = xt.zip_map(&x0, |x, x0| -(x - m.alpha * x0) / m.lambda).unwrap();
            let target = s.score_target(&eps, t).unwrap();
            assert!(target.max_abs_diff(&analytic) < 1e-9 * (1.0 + 1.0 / m.lambda));
        }
    }
}
