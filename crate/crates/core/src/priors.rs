//! Prior densities over the transformation parameters and samplers for them.
//!
//! * amplitudes `alpha, beta ~ N(0, sigma_ab^2)`, wavenumbers `k_x, k_y ~ N(0, w^2)`
//! * scales `s_x, s_y ~ Wald(1, sigma_s)`, independent
//! * shear `phi` ~ two-component Gumbel mixture with weight `A = (phibar + pi/2) / pi`
//! * rotation, translation and wave center uniform; their constant log-densities are dropped

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, InverseGaussian, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::TransformParams;

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("hyperparameter {name} = {value} must be strictly positive")]
    NonPositive { name: &'static str, value: f64 },
    #[error("phibar = {0} must lie in (-pi/2, pi/2)")]
    MeanShearOutOfDomain(f64),
    #[error("scale ({0}, {1}) must be strictly positive")]
    NonPositiveScale(f64, f64),
    #[error("invalid uniform bounds for {name}: [{lo}, {hi}]")]
    InvalidBounds {
        name: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error("shear rejection sampler gave up after {0} draws")]
    RejectionCap(usize),
}

/// Prior shape constants and the robust-loss threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Amplitude standard deviation, pixels.
    pub sigma_ab: f64,
    /// Wavenumber standard deviation, cycles per pixel.
    pub w_num: f64,
    /// Wald shape parameter of the scale prior.
    pub sigma_s: f64,
    /// Gumbel scale of the shear prior, radians.
    pub b: f64,
    /// Mean shear angle, radians.
    pub phibar: f64,
    /// Smooth-Huber threshold, intensity units.
    pub tau: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            sigma_ab: 2.0,
            w_num: 0.05,
            sigma_s: 4.0,
            b: 0.15,
            phibar: 0.0,
            tau: 0.1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), PriorError> {
        for (name, value) in [
            ("sigma_ab", self.sigma_ab),
            ("w", self.w_num),
            ("sigma_s", self.sigma_s),
            ("b", self.b),
            ("tau", self.tau),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PriorError::NonPositive { name, value });
            }
        }
        if !(self.phibar.abs() < FRAC_PI_2) {
            return Err(PriorError::MeanShearOutOfDomain(self.phibar));
        }
        Ok(())
    }
}

/// Log-density of four independent zero-mean normals: two amplitudes with
/// variance `sigma_ab^2`, two wavenumbers with variance `w^2`. The
/// normalizer is `1 / (4 pi^2 sigma_ab^2 w^2)`.
pub fn log_prior_deformation(
    alpha: f64,
    beta: f64,
    k_x: f64,
    k_y: f64,
    hyper: &Hyperparams,
) -> f64 {
    let s2 = hyper.sigma_ab * hyper.sigma_ab;
    let w2 = hyper.w_num * hyper.w_num;
    -(4.0 * PI * PI * s2 * w2).ln()
        - (alpha * alpha + beta * beta) / (2.0 * s2)
        - (k_x * k_x + k_y * k_y) / (2.0 * w2)
}

pub fn log_prior_scale(s_x: f64, s_y: f64, hyper: &Hyperparams) -> Result<f64, PriorError> {
    if !(s_x > 0.0 && s_y > 0.0) {
        return Err(PriorError::NonPositiveScale(s_x, s_y));
    }
    let sig = hyper.sigma_s;
    Ok(sig.ln()
        - 0.5 * sig * (-4.0 + 1.0 / s_x + s_x + 1.0 / s_y + s_y)
        - (2.0 * PI).ln()
        - 1.5 * (s_x.ln() + s_y.ln()))
}

/// Mixture weight `A` of the left-skewed Gumbel component.
pub fn shear_mixture_weight(phibar: f64) -> f64 {
    (phibar + FRAC_PI_2) / PI
}

/// `ln[(1-A) e^{-z-e^{-z}} + A e^{z-e^{z}}]`, the log of the mixture numerator.
pub(crate) fn log_shear_numerator(z: f64, weight: f64) -> f64 {
    let right = (1.0 - weight).ln() - z - (-z).exp();
    let left = weight.ln() + z - z.exp();
    log_add_exp(right, left)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-density of the shear mixture, evaluated on all of R.
pub fn log_prior_shear(phi: f64, hyper: &Hyperparams) -> f64 {
    let z = (phi - hyper.phibar) / hyper.b;
    log_shear_numerator(z, shear_mixture_weight(hyper.phibar)) - hyper.b.ln()
}

/// Sum of the three informative log-priors; `-inf` when `params` leave the
/// prior's support (`s <= 0`, `|phi| >= pi/2`).
pub fn log_prior_total(params: &TransformParams, hyper: &Hyperparams) -> f64 {
    if params.phi.is_nan() || params.phi.abs() >= FRAC_PI_2 {
        return f64::NEG_INFINITY;
    }
    let Ok(scale) = log_prior_scale(params.s_x, params.s_y, hyper) else {
        return f64::NEG_INFINITY;
    };
    log_prior_deformation(params.alpha, params.beta, params.k_x, params.k_y, hyper)
        + scale
        + log_prior_shear(params.phi, hyper)
}

/// Inverse Gaussian distribution, sampled by the transformation method
/// (one normal and one uniform draw per variate).
#[derive(Debug, Clone, Copy)]
pub struct Wald {
    mean: f64,
    shape: f64,
}

impl Wald {
    pub fn new(mean: f64, shape: f64) -> Result<Self, PriorError> {
        if !(mean > 0.0) {
            return Err(PriorError::NonPositive {
                name: "mean",
                value: mean,
            });
        }
        if !(shape > 0.0) {
            return Err(PriorError::NonPositive {
                name: "shape",
                value: shape,
            });
        }
        Ok(Self { mean, shape })
    }
}

impl Distribution<f64> for Wald {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        InverseGaussian::new(self.mean, self.shape)
            .expect("parameters checked in Wald::new")
            .sample(rng)
    }
}

/// Shear mixture: with probability `1 - A` a max-Gumbel, otherwise a
/// min-Gumbel, both at location `phibar` and scale `b`.
#[derive(Debug, Clone, Copy)]
pub struct ShearMixture {
    location: f64,
    scale: f64,
    weight: f64,
}

impl ShearMixture {
    pub fn new(hyper: &Hyperparams) -> Self {
        Self {
            location: hyper.phibar,
            scale: hyper.b,
            weight: shear_mixture_weight(hyper.phibar),
        }
    }
}

impl Distribution<f64> for ShearMixture {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let pick: f64 = rng.random();
        // open interval keeps both logarithms finite
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let g = -(-u.ln()).ln();
        let z = if pick < self.weight { -g } else { g };
        self.location + self.scale * z
    }
}

/// Ranges of the uniformly distributed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBounds {
    pub theta: (f64, f64),
    pub d_x: (f64, f64),
    pub d_y: (f64, f64),
    pub x0: (f64, f64),
    pub y0: (f64, f64),
}

impl Default for UniformBounds {
    fn default() -> Self {
        Self {
            theta: (-PI / 6.0, PI / 6.0),
            d_x: (-3.0, 3.0),
            d_y: (-3.0, 3.0),
            x0: (0.0, 1.0),
            y0: (0.0, 1.0),
        }
    }
}

impl UniformBounds {
    fn validate(&self) -> Result<(), PriorError> {
        for (name, (lo, hi)) in [
            ("theta", self.theta),
            ("d_x", self.d_x),
            ("d_y", self.d_y),
            ("x0", self.x0),
            ("y0", self.y0),
        ] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(PriorError::InvalidBounds { name, lo, hi });
            }
        }
        for (name, (lo, hi)) in [("x0", self.x0), ("y0", self.y0)] {
            if lo < 0.0 || hi > 1.0 {
                return Err(PriorError::InvalidBounds { name, lo, hi });
            }
        }
        Ok(())
    }
}

const SHEAR_REJECTION_CAP: usize = 10_000;

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws one parameter vector from the prior. Deterministic for a given rng state.
pub fn sample_prior<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    rng: &mut R,
    bounds: &UniformBounds,
) -> Result<TransformParams, PriorError> {
    hyper.validate()?;
    bounds.validate()?;
    let wald = Wald::new(1.0, hyper.sigma_s)?;
    let shear = ShearMixture::new(hyper);

    let normal = |rng: &mut R, sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
    let alpha = normal(rng, hyper.sigma_ab);
    let beta = normal(rng, hyper.sigma_ab);
    let k_x = normal(rng, hyper.w_num);
    let k_y = normal(rng, hyper.w_num);
    let s_x = wald.sample(rng);
    let s_y = wald.sample(rng);

    let mut phi = None;
    for _ in 0..SHEAR_REJECTION_CAP {
        let candidate = shear.sample(rng);
        if candidate.abs() < FRAC_PI_2 {
            phi = Some(candidate);
            break;
        }
    }
    let phi = phi.ok_or(PriorError::RejectionCap(SHEAR_REJECTION_CAP))?;

    Ok(TransformParams {
        s_x,
        s_y,
        theta: uniform(rng, bounds.theta),
        phi,
        alpha,
        beta,
        k_x,
        k_y,
        x0: uniform(rng, bounds.x0),
        y0: uniform(rng, bounds.y0),
        d_x: uniform(rng, bounds.d_x),
        d_y: uniform(rng, bounds.d_y),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_hyper() -> Hyperparams {
        Hyperparams {
            sigma_ab: 1.0,
            w_num: 1.0,
            sigma_s: 1.0,
            b: 1.0,
            phibar: 0.0,
            tau: 1.0,
        }
    }

    /// Composite trapezoid on a uniform grid; spectrally accurate for the
    /// smooth, rapidly decaying integrands used here.
    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (inner + 0.5 * (f(a) + f(b)))
    }

    /// Independent one-dimensional Wald density with mean `mu` and shape `lambda`.
    fn wald_pdf(x: f64, mu: f64, lambda: f64) -> f64 {
        (lambda / (2.0 * PI * x.powi(3))).sqrt()
            * (-lambda * (x - mu).powi(2) / (2.0 * mu * mu * x)).exp()
    }

    #[test]
    fn deformation_examples() {
        let h = unit_hyper();
        let at_zero = log_prior_deformation(0.0, 0.0, 0.0, 0.0, &h);
        assert!((at_zero - (1.0 / (4.0 * PI * PI)).ln()).abs() < 1e-14);
        assert!((at_zero - -3.675754132818).abs() < 1e-11);
        let one_sigma = log_prior_deformation(1.0, 0.0, 0.0, 0.0, &h);
        assert!((one_sigma - (at_zero - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn deformation_integrates_to_one_in_four_dimensions() {
        let h = Hyperparams {
            sigma_ab: 1.7,
            w_num: 0.04,
            ..Hyperparams::default()
        };
        // step sigma/2 over +-8 sigma: 33 nodes per axis
        let n = 32;
        let grid = |sd: f64| -> Vec<f64> {
            (0..=n)
                .map(|i| -8.0 * sd + i as f64 * 16.0 * sd / n as f64)
                .collect()
        };
        let weight = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
        let (ga, gk) = (grid(h.sigma_ab), grid(h.w_num));
        let (ha, hk) = (16.0 * h.sigma_ab / n as f64, 16.0 * h.w_num / n as f64);
        let mut total = 0.0;
        for (i, &a) in ga.iter().enumerate() {
            for (j, &b) in ga.iter().enumerate() {
                for (k, &kx) in gk.iter().enumerate() {
                    for (l, &ky) in gk.iter().enumerate() {
                        total += weight(i)
                            * weight(j)
                            * weight(k)
                            * weight(l)
                            * log_prior_deformation(a, b, kx, ky, &h).exp();
                    }
                }
            }
        }
        total *= ha * ha * hk * hk;
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn scale_examples() {
        let h = unit_hyper();
        let at_mean = log_prior_scale(1.0, 1.0, &h).unwrap();
        assert!((at_mean - -(2.0 * PI).ln()).abs() < 1e-14);
        assert!((at_mean - -1.837877066409).abs() < 1e-11);

        let v = log_prior_scale(2.0, 1.0, &h).unwrap();
        let direct = ((-0.25f64).exp() / (2.0 * PI * 8f64.sqrt())).ln();
        let oracle = (wald_pdf(2.0, 1.0, 1.0) * wald_pdf(1.0, 1.0, 1.0)).ln();
        assert!((v - direct).abs() < 1e-13);
        assert!((v - oracle).abs() < 1e-13);
        assert!((v - -3.127597837249).abs() < 1e-11);

        assert_eq!(
            log_prior_scale(0.0, 1.0, &h),
            Err(PriorError::NonPositiveScale(0.0, 1.0))
        );
        assert!(log_prior_scale(1.0, -2.0, &h).is_err());
    }

    #[test]
    fn shear_examples() {
        assert_eq!(shear_mixture_weight(0.0), 0.5);
        let h = unit_hyper();
        assert!((log_prior_shear(0.0, &h) - -1.0).abs() < 1e-15);
        let h = Hyperparams::default();
        for i in 0..200 {
            let phi = -1.5 + 3.0 * i as f64 / 199.0;
            let a = log_prior_shear(phi, &h).exp();
            let b = log_prior_shear(-phi, &h).exp();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shear_weight_tends_to_one_near_right_limit() {
        let a = shear_mixture_weight(FRAC_PI_2 - 1e-9);
        assert!(a > 1.0 - 1e-9 && a < 1.0);
        // the dominant component falls off faster above phibar than below it
        let h = Hyperparams {
            phibar: 1.2,
            b: 0.1,
            ..Hyperparams::default()
        };
        assert!(shear_mixture_weight(h.phibar) > 0.88);
        let above = log_prior_shear(1.2 + 0.3, &h);
        let below = log_prior_shear(1.2 - 0.3, &h);
        assert!(above < below);
    }

    #[test]
    fn total_examples() {
        let h = unit_hyper();
        let id = TransformParams::identity();
        let v = log_prior_total(&id, &h);
        assert!((v - -6.513631199227).abs() < 1e-11, "{v}");

        let mut neg = id;
        neg.s_x = -1.0;
        assert_eq!(log_prior_total(&neg, &h), f64::NEG_INFINITY);

        let mut tiny = id;
        tiny.s_x = 1e-3;
        assert!(log_prior_total(&tiny, &h) < v);

        let mut sheared = id;
        sheared.phi = FRAC_PI_2;
        assert_eq!(log_prior_total(&sheared, &h), f64::NEG_INFINITY);
    }

    #[test]
    fn scale_integrates_to_one() {
        for sigma_s in [0.5, 1.0, 4.0] {
            let h = Hyperparams {
                sigma_s,
                ..Hyperparams::default()
            };
            // substitute s = e^t; separable integrand sampled on a 2-D grid
            let (lo, hi, n) = (-12.0, 8.0, 1200);
            let step = (hi - lo) / n as f64;
            let mut total = 0.0;
            for i in 0..=n {
                let t1 = lo + i as f64 * step;
                for j in 0..=n {
                    let t2 = lo + j as f64 * step;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 }
                        * if j == 0 || j == n { 0.5 } else { 1.0 };
                    total += w * (log_prior_scale(t1.exp(), t2.exp(), &h).unwrap() + t1 + t2).exp();
                }
            }
            total *= step * step;
            assert!((total - 1.0).abs() < 1e-4, "sigma_s {sigma_s}: {total}");
        }
    }

    #[test]
    fn shear_integrates_to_one() {
        for (phibar, b) in [(0.0, 0.15), (1.0, 0.3), (-0.8, 0.05)] {
            let h = Hyperparams {
                phibar,
                b,
                ..Hyperparams::default()
            };
            let total = trapezoid(
                |p| log_prior_shear(p, &h).exp(),
                phibar - 45.0 * b,
                phibar + 45.0 * b,
                20_000,
            );
            assert!((total - 1.0).abs() < 1e-6, "({phibar}, {b}): {total}");
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let h = Hyperparams::default();
        let b = UniformBounds::default();
        let a = sample_prior(&h, &mut ChaCha8Rng::seed_from_u64(11), &b).unwrap();
        let c = sample_prior(&h, &mut ChaCha8Rng::seed_from_u64(11), &b).unwrap();
        assert_eq!(a, c);
        a.validate().unwrap();
    }

    #[test]
    fn sampler_rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = Hyperparams {
            sigma_s: 0.0,
            ..Hyperparams::default()
        };
        assert!(sample_prior(&bad, &mut rng, &UniformBounds::default()).is_err());
        let bounds = UniformBounds {
            x0: (0.0, 2.0),
            ..UniformBounds::default()
        };
        assert!(sample_prior(&Hyperparams::default(), &mut rng, &bounds).is_err());
    }

    #[test]
    fn wald_sample_mean() {
        let wald = Wald::new(1.0, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mean = (0..n).map(|_| wald.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn shear_sample_skewness() {
        let h = Hyperparams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mix = ShearMixture::new(&h);
        let xs: Vec<f64> = (0..100_000).map(|_| mix.sample(&mut rng)).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let skew = m3 / m2.powf(1.5);
        assert!(skew.abs() < 0.05, "{skew}");
    }

    proptest! {
        #[test]
        fn scale_exchange_symmetry(a in 0.01f64..10.0, b in 0.01f64..10.0, s in 0.1f64..10.0) {
            let h = Hyperparams { sigma_s: s, ..Hyperparams::default() };
            let l = log_prior_scale(a, b, &h).unwrap();
            let r = log_prior_scale(b, a, &h).unwrap();
            prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
        }

        #[test]
        fn deformation_peak_at_origin(a in -5.0f64..5.0, b in -5.0f64..5.0,
                                      kx in -0.3f64..0.3, ky in -0.3f64..0.3) {
            let h = Hyperparams::default();
            prop_assert!(log_prior_deformation(a, b, kx, ky, &h) <= log_prior_deformation(0.0, 0.0, 0.0, 0.0, &h));
        }

        #[test]
        fn densities_are_finite_in_support(phi in -1.5f64..1.5, phibar in -1.5f64..1.5) {
            let h = Hyperparams { phibar, ..Hyperparams::default() };
            let v = log_prior_shear(phi, &h);
            prop_assert!(!v.is_nan() && v < f64::INFINITY);
        }
    }
}
