//! Robust data term, likelihood and negative log-posterior.

pub mod bessel;

use std::f64::consts::{E, FRAC_PI_2};

use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::priors::{log_prior_total, log_shear_numerator, shear_mixture_weight, Hyperparams};
use crate::transform::{TransformError, TransformParams, Warp, WarpedPatch};

pub use bessel::{bessel_k1, BesselDomainError};

/// Default minimum fraction of template pixels that must take part in the data term.
pub const DEFAULT_COVERAGE_FLOOR: f64 = 0.25;

/// `sqrt(1 + x^2 / tau^2) - 1`: quadratic near zero, linear in the tails.
#[inline]
pub fn smooth_huber(x: f64, tau: f64) -> f64 {
    let r = x / tau;
    // r^2 / (sqrt(1 + r^2) + 1) avoids cancellation for small residuals
    let r2 = r * r;
    if r2.is_infinite() {
        return r.abs();
    }
    r2 / ((1.0 + r2).sqrt() + 1.0)
}

/// Data-term summary at one placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataTerm {
    pub value: f64,
    pub coverage: f64,
    pub n_valid: usize,
}

/// Visits every template pixel whose warped sample and image sample both
/// exist, passing `image - warped` to `f`. Returns the number visited.
fn for_each_residual(
    image: &GrayImage,
    template: &GrayImage,
    params: &TransformParams,
    u: i64,
    v: i64,
    mut f: impl FnMut(f64),
) -> Result<usize, TransformError> {
    let (w, h) = (template.width(), template.height());
    let warp = Warp::new(params, w, h)?;
    let (iw, ih) = (image.width() as i64, image.height() as i64);
    let mut n = 0;
    for y in 0..h {
        let iy = v + y as i64;
        if iy < 0 || iy >= ih {
            continue;
        }
        for x in 0..w {
            let ix = u + x as i64;
            if ix < 0 || ix >= iw {
                continue;
            }
            let (qx, qy) = warp.map(x as f64, y as f64);
            if let Some(t) = template.sample_bilinear(qx, qy) {
                f(image.get(ix as usize, iy as usize) - t);
                n += 1;
            }
        }
    }
    Ok(n)
}

/// Unit-area Riemann sum of the smooth-Huber residuals over the template support.
pub fn data_term(
    image: &GrayImage,
    template: &GrayImage,
    params: &TransformParams,
    u: i64,
    v: i64,
    tau: f64,
) -> Result<DataTerm, TransformError> {
    let mut sum = 0.0;
    let n = for_each_residual(image, template, params, u, v, |r| {
        sum += smooth_huber(r, tau)
    })?;
    Ok(DataTerm {
        value: sum,
        coverage: n as f64 / (template.width() * template.height()) as f64,
        n_valid: n,
    })
}

/// Same as [`data_term`] for a patch that has already been warped.
pub fn data_term_patch(
    image: &GrayImage,
    patch: &WarpedPatch,
    u: i64,
    v: i64,
    tau: f64,
) -> DataTerm {
    let (iw, ih) = (image.width() as i64, image.height() as i64);
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..patch.height {
        let iy = v + y as i64;
        if iy < 0 || iy >= ih {
            continue;
        }
        let row = y * patch.width;
        for x in 0..patch.width {
            let ix = u + x as i64;
            if ix < 0 || ix >= iw || !patch.valid[row + x] {
                continue;
            }
            sum += smooth_huber(
                image.get(ix as usize, iy as usize) - patch.values[row + x],
                tau,
            );
            n += 1;
        }
    }
    DataTerm {
        value: sum,
        coverage: n as f64 / (patch.width * patch.height) as f64,
        n_valid: n,
    }
}

/// Plain sum of squared residuals over the same support as [`data_term`].
pub fn sum_squared_residuals(
    image: &GrayImage,
    template: &GrayImage,
    params: &TransformParams,
    u: i64,
    v: i64,
) -> Result<DataTerm, TransformError> {
    let mut sum = 0.0;
    let n = for_each_residual(image, template, params, u, v, |r| sum += r * r)?;
    Ok(DataTerm {
        value: sum,
        coverage: n as f64 / (template.width() * template.height()) as f64,
        n_valid: n,
    })
}

/// `ln C1` with `C1 = 1 / (2 e K1(1) tau)`, the normalizer of `exp(-g_tau(x))` over R.
pub fn log_normalizer(tau: f64) -> f64 {
    let k1 = bessel_k1(1.0).expect("K1(1) is finite");
    -(2.0 * E * k1 * tau).ln()
}

/// Log-likelihood of `n_valid` independent residuals with total loss `s`.
pub fn likelihood(s: f64, tau: f64, n_valid: usize) -> f64 {
    n_valid as f64 * log_normalizer(tau) - s
}

/// Which form of the prior penalty enters the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorMode {
    /// The closed form printed for the final objective: quadratic and Wald
    /// exponents without their 1/2 factors, normalizing constants dropped.
    #[default]
    Eq10,
    /// Exact negative log of the prior densities.
    Consistent,
}

impl std::str::FromStr for PosteriorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eq10" => Ok(Self::Eq10),
            "consistent" => Ok(Self::Consistent),
            other => Err(format!(
                "unknown posterior mode {other:?} (expected eq10 or consistent)"
            )),
        }
    }
}

/// Prior penalty in the printed closed form. For `phibar != 0` the mixture
/// weights are kept and the numerator scaled by 2, which reproduces the
/// unweighted sum when `phibar = 0`.
pub fn eq10_prior_penalty(params: &TransformParams, hyper: &Hyperparams) -> f64 {
    if !(params.s_x > 0.0 && params.s_y > 0.0)
        || params.phi.is_nan()
        || params.phi.abs() >= FRAC_PI_2
    {
        return f64::INFINITY;
    }
    let p = params;
    let z = (p.phi - hyper.phibar) / hyper.b;
    let log_scale = 1.5 * (p.s_x.ln() + p.s_y.ln());
    let shear = -(2f64.ln() + log_shear_numerator(z, shear_mixture_weight(hyper.phibar)));
    let wavenumber = (p.k_x * p.k_x + p.k_y * p.k_y) / (hyper.w_num * hyper.w_num);
    let wald = hyper.sigma_s * (1.0 / p.s_x + p.s_x + 1.0 / p.s_y + p.s_y - 4.0);
    let amplitude = (p.alpha * p.alpha + p.beta * p.beta) / (hyper.sigma_ab * hyper.sigma_ab);
    log_scale + shear + wavenumber + wald + amplitude
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub data_term: f64,
    pub log_prior: f64,
    pub neg_log_posterior: f64,
    pub coverage: f64,
    pub n_valid: usize,
}

/// Negative log-posterior over a fixed image/template pair.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub image: &'a GrayImage,
    pub template: &'a GrayImage,
    pub hyper: Hyperparams,
    pub mode: PosteriorMode,
    pub coverage_floor: f64,
}

impl<'a> Objective<'a> {
    pub fn new(
        image: &'a GrayImage,
        template: &'a GrayImage,
        hyper: Hyperparams,
        mode: PosteriorMode,
    ) -> Self {
        Self {
            image,
            template,
            hyper,
            mode,
            coverage_floor: DEFAULT_COVERAGE_FLOOR,
        }
    }

    pub fn with_coverage_floor(mut self, floor: f64) -> Self {
        self.coverage_floor = floor;
        self
    }

    pub fn log_prior(&self, params: &TransformParams) -> f64 {
        match self.mode {
            PosteriorMode::Consistent => log_prior_total(params, &self.hyper),
            PosteriorMode::Eq10 => -eq10_prior_penalty(params, &self.hyper),
        }
    }

    /// Excluded parameters, empty overlap and coverage below the floor all
    /// evaluate to `+inf`.
    pub fn evaluate(&self, params: &TransformParams, u: i64, v: i64) -> ObjectiveValue {
        let log_prior = self.log_prior(params);
        if log_prior == f64::NEG_INFINITY {
            return ObjectiveValue {
                data_term: 0.0,
                log_prior,
                neg_log_posterior: f64::INFINITY,
                coverage: 0.0,
                n_valid: 0,
            };
        }
        let dt = data_term(self.image, self.template, params, u, v, self.hyper.tau)
            .expect("shear checked by the prior");
        let feasible = dt.n_valid > 0 && dt.coverage >= self.coverage_floor;
        ObjectiveValue {
            data_term: dt.value,
            log_prior,
            neg_log_posterior: if feasible {
                dt.value - log_prior
            } else {
                f64::INFINITY
            },
            coverage: dt.coverage,
            n_valid: dt.n_valid,
        }
    }
}

pub fn neg_log_posterior(
    image: &GrayImage,
    template: &GrayImage,
    params: &TransformParams,
    u: i64,
    v: i64,
    hyper: &Hyperparams,
    mode: PosteriorMode,
) -> ObjectiveValue {
    Objective::new(image, template, *hyper, mode).evaluate(params, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Rect;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn scene(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.25 * (0.3 * x).sin() * (0.17 * y + 1.0).cos()
                + 0.2 * (-((x - 12.0).powi(2) + (y - 9.0).powi(2)) / 30.0).exp()
        })
        .unwrap()
    }

    /// Straight transcription of the warp and sum, sharing no code with the
    /// implementation beyond pixel access.
    fn naive_data_term(
        image: &GrayImage,
        template: &GrayImage,
        p: &TransformParams,
        u: i64,
        v: i64,
        tau: f64,
    ) -> (f64, usize) {
        let (w, h) = (template.width() as f64, template.height() as f64);
        let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
        let t = p.phi.tan();
        let (s, c) = (p.theta.sin(), p.theta.cos());
        let bilinear = |img: &GrayImage, x: f64, y: f64| -> Option<f64> {
            if x < 0.0 || y < 0.0 || x > (img.width() - 1) as f64 || y > (img.height() - 1) as f64 {
                return None;
            }
            let (i, j) = (x.floor() as usize, y.floor() as usize);
            let (fx, fy) = (x - i as f64, y - j as f64);
            let at = |a: usize, b: usize| img.get(a.min(img.width() - 1), b.min(img.height() - 1));
            Some(
                at(i, j) * (1.0 - fx) * (1.0 - fy)
                    + at(i + 1, j) * fx * (1.0 - fy)
                    + at(i, j + 1) * (1.0 - fx) * fy
                    + at(i + 1, j + 1) * fx * fy,
            )
        };
        let mut sum = 0.0;
        let mut n = 0;
        for y in 0..template.height() {
            for x in 0..template.width() {
                let (px, py) = (x as f64 - cx, y as f64 - cy);
                // U then R then S
                let (ux, uy) = (px + t * py, py);
                let (rx, ry) = (c * ux - s * uy, s * ux + c * uy);
                let delta = ((x as f64 - p.x0 * (w - 1.0)).powi(2)
                    + (y as f64 - p.y0 * (h - 1.0)).powi(2))
                .sqrt();
                let qx = p.s_x * rx + cx + p.alpha * (2.0 * PI * p.k_x * delta).cos() + p.d_x;
                let qy = p.s_y * ry + cy + p.beta * (2.0 * PI * p.k_y * delta).cos() + p.d_y;
                let (ix, iy) = (u + x as i64, v + y as i64);
                if ix < 0 || iy < 0 || ix >= image.width() as i64 || iy >= image.height() as i64 {
                    continue;
                }
                if let Some(tv) = bilinear(template, qx, qy) {
                    let r = image.get(ix as usize, iy as usize) - tv;
                    sum += (1.0 + r * r / (tau * tau)).sqrt() - 1.0;
                    n += 1;
                }
            }
        }
        (sum, n)
    }

    #[test]
    fn smooth_huber_examples() {
        let tau = 0.2;
        assert_eq!(smooth_huber(0.0, tau), 0.0);
        assert!((smooth_huber(tau, tau) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((smooth_huber(3.0 * tau, tau) - 2.162_277_660_168_379).abs() < 1e-14);
        assert!((smooth_huber(-3.0 * tau, tau) - 2.162_277_660_168_379).abs() < 1e-14);
    }

    #[test]
    fn smooth_huber_second_derivative_continuous_at_threshold() {
        let h = 1e-5;
        for tau in [0.1, 1.0] {
            let d2 = |x: f64| {
                (smooth_huber(x + h, tau) - 2.0 * smooth_huber(x, tau) + smooth_huber(x - h, tau))
                    / (h * h)
            };
            for edge in [tau, -tau] {
                // change in slope of g'' across the threshold; a step in g'' shows up at full size
                let jump = ((d2(edge + h) - d2(edge)) - (d2(edge) - d2(edge - h))).abs();
                assert!(jump < 1e-4, "tau {tau} edge {edge}: jump {jump}");
            }
        }
    }

    #[test]
    fn smooth_huber_regimes() {
        let tau = 0.1;
        for i in 1..=1000 {
            let x = 0.1 * tau * i as f64 / 1000.0 * 0.999;
            let q = x * x / (2.0 * tau * tau);
            assert!(((smooth_huber(x, tau) - q) / q).abs() < 0.01);
        }
        for i in 0..1000 {
            let x = 100.0 * tau * (1.0 + i as f64 * 0.01) + 1e-12;
            assert!((smooth_huber(x, tau) - (x / tau - 1.0)).abs() < 0.01);
        }
    }

    #[test]
    fn exact_crop_has_zero_data_term() {
        let img = scene(40, 30);
        let t = img.crop(Rect::new(11, 7, 12, 10)).unwrap();
        let dt = data_term(&img, &t, &TransformParams::identity(), 11, 7, 0.1).unwrap();
        assert_eq!(dt.value, 0.0);
        assert_eq!(dt.coverage, 1.0);
        assert_eq!(dt.n_valid, 120);
    }

    #[test]
    fn constant_images_closed_form() {
        let (c1, c2, tau) = (0.8, 0.3, 0.1);
        let img = GrayImage::filled(20, 20, c1).unwrap();
        let t = GrayImage::filled(6, 5, c2).unwrap();
        let dt = data_term(&img, &t, &TransformParams::identity(), 3, 4, tau).unwrap();
        let expected = 30.0 * ((1.0 + (c1 - c2) * (c1 - c2) / (tau * tau)).sqrt() - 1.0);
        assert!((dt.value - expected).abs() < 1e-12);
        // partially outside the image: only overlapping pixels count
        let edge = data_term(&img, &t, &TransformParams::identity(), 17, 0, tau).unwrap();
        assert_eq!(edge.n_valid, 15);
    }

    #[test]
    fn patch_form_agrees() {
        let img = scene(40, 30);
        let t = img.crop(Rect::new(5, 5, 14, 11)).unwrap();
        let p = TransformParams {
            theta: 0.2,
            s_x: 1.1,
            alpha: 0.5,
            k_x: 0.05,
            ..TransformParams::identity()
        };
        let patch = crate::transform::warp_template(&t, &p).unwrap();
        let a = data_term(&img, &t, &p, 8, 3, 0.1).unwrap();
        let b = data_term_patch(&img, &patch, 8, 3, 0.1);
        assert_eq!(a.n_valid, b.n_valid);
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn likelihood_examples() {
        assert!((likelihood(0.0, 1.0, 1) - -1.185_495_232_349_193).abs() < 1e-12);
        assert!((likelihood(0.0, 0.1, 1) - 1.117_089_860_644_852_5).abs() < 1e-12);
        let base = likelihood(3.0, 0.5, 10);
        assert!((likelihood(6.0, 0.5, 10) - (base - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn normalizer_matches_quadrature() {
        // C1 * int exp(-g_tau(x)) dx = 1
        for tau in [0.05, 0.1, 1.0] {
            let (a, b, n) = (-60.0 * tau, 60.0 * tau, 200_000);
            let h = (b - a) / n as f64;
            let f = |x: f64| (-smooth_huber(x, tau)).exp();
            let integral =
                h * ((1..n).map(|i| f(a + i as f64 * h)).sum::<f64>() + 0.5 * (f(a) + f(b)));
            // tail beyond |x| = 60 tau: 2 tau e^{1 - 60}-ish, negligible but add the exponential bound
            let tail = 2.0 * tau * (1.0f64 - 60.0).exp();
            assert!(
                (log_normalizer(tau) + (integral + tail).ln()).abs() < 1e-9,
                "tau {tau}"
            );
        }
    }

    #[test]
    fn eq10_identity_value() {
        let img = scene(40, 30);
        let t = img.crop(Rect::new(11, 7, 12, 10)).unwrap();
        let hyper = Hyperparams {
            b: 1.0,
            phibar: 0.0,
            ..Hyperparams::default()
        };
        let v = neg_log_posterior(
            &img,
            &t,
            &TransformParams::identity(),
            11,
            7,
            &hyper,
            PosteriorMode::Eq10,
        );
        assert_eq!(v.data_term, 0.0);
        assert!((v.neg_log_posterior - (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!((v.neg_log_posterior - 0.306_852_819_440_054_7).abs() < 1e-12);

        let tiny = TransformParams {
            s_x: 1e-3,
            ..TransformParams::identity()
        };
        let w = neg_log_posterior(&img, &t, &tiny, 11, 7, &hyper, PosteriorMode::Eq10);
        assert!(w.neg_log_posterior > v.neg_log_posterior);
    }

    #[test]
    fn sentinel_for_excluded_params() {
        let img = scene(40, 30);
        let t = img.crop(Rect::new(11, 7, 12, 10)).unwrap();
        let h = Hyperparams::default();
        for mode in [PosteriorMode::Eq10, PosteriorMode::Consistent] {
            for p in [
                TransformParams {
                    s_x: 0.0,
                    ..TransformParams::identity()
                },
                TransformParams {
                    s_y: -0.5,
                    ..TransformParams::identity()
                },
                TransformParams {
                    phi: FRAC_PI_2,
                    ..TransformParams::identity()
                },
                TransformParams {
                    phi: -2.0,
                    ..TransformParams::identity()
                },
            ] {
                assert_eq!(
                    neg_log_posterior(&img, &t, &p, 11, 7, &h, mode).neg_log_posterior,
                    f64::INFINITY
                );
            }
        }
    }

    #[test]
    fn coverage_floor_excludes_small_overlap() {
        let img = scene(40, 30);
        let t = img.crop(Rect::new(11, 7, 12, 10)).unwrap();
        let h = Hyperparams::default();
        // template mostly outside the image
        let v = neg_log_posterior(
            &img,
            &t,
            &TransformParams::identity(),
            36,
            27,
            &h,
            PosteriorMode::Eq10,
        );
        assert!(v.coverage < DEFAULT_COVERAGE_FLOOR);
        assert_eq!(v.neg_log_posterior, f64::INFINITY);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "eq10".parse::<PosteriorMode>().unwrap(),
            PosteriorMode::Eq10
        );
        assert_eq!(
            "consistent".parse::<PosteriorMode>().unwrap(),
            PosteriorMode::Consistent
        );
        assert!("other".parse::<PosteriorMode>().is_err());
    }

    fn mild_params() -> impl Strategy<Value = TransformParams> {
        (
            (0.8f64..1.25, 0.8f64..1.25, -0.3f64..0.3, -0.3f64..0.3),
            (-1.0f64..1.0, -1.0f64..1.0, -0.08f64..0.08, -0.08f64..0.08),
            (0.0f64..=1.0, 0.0f64..=1.0, -1.5f64..1.5, -1.5f64..1.5),
        )
            .prop_map(|(a, b, c)| TransformParams {
                s_x: a.0,
                s_y: a.1,
                theta: a.2,
                phi: a.3,
                alpha: b.0,
                beta: b.1,
                k_x: b.2,
                k_y: b.3,
                x0: c.0,
                y0: c.1,
                d_x: c.2,
                d_y: c.3,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn smooth_huber_even_and_increasing(x in 0.0f64..10.0, dx in 1e-6f64..1.0, tau in 0.01f64..2.0) {
            prop_assert_eq!(smooth_huber(x, tau), smooth_huber(-x, tau));
            prop_assert!(smooth_huber(x + dx, tau) > smooth_huber(x, tau));
        }

        #[test]
        fn data_term_matches_naive_oracle(p in mild_params(), u in -4i64..20, v in -4i64..16, tau in 0.05f64..0.5) {
            let img = scene(36, 28);
            let t = img.crop(Rect::new(9, 6, 13, 11)).unwrap();
            let dt = data_term(&img, &t, &p, u, v, tau).unwrap();
            let (oracle, n) = naive_data_term(&img, &t, &p, u, v, tau);
            prop_assert_eq!(dt.n_valid, n);
            prop_assert!((dt.value - oracle).abs() < 1e-10);
            prop_assert!(dt.value >= 0.0);
        }

        #[test]
        fn translation_consistency(p in mild_params(), a in 0usize..6, b in 0usize..6, u in 0i64..12, v in 0i64..10) {
            let img = scene(30, 24);
            let t = img.crop(Rect::new(4, 4, 12, 9)).unwrap();
            let shifted = GrayImage::from_fn(30 + a, 24 + b, |x, y| {
                if x >= a && y >= b { img.get(x - a, y - b) } else { 0.0 }
            }).unwrap();
            let d0 = data_term(&img, &t, &p, u, v, 0.1).unwrap();
            let d1 = data_term(&shifted, &t, &p, u + a as i64, v + b as i64, 0.1).unwrap();
            prop_assert_eq!(d0, d1);
        }

        #[test]
        fn posterior_modes_differ_by_halved_terms(p in mild_params()) {
            let img = scene(36, 28);
            let t = img.crop(Rect::new(9, 6, 13, 11)).unwrap();
            let h = Hyperparams::default();
            let eq10 = neg_log_posterior(&img, &t, &p, 9, 6, &h, PosteriorMode::Eq10);
            let cons = neg_log_posterior(&img, &t, &p, 9, 6, &h, PosteriorMode::Consistent);
            prop_assert_eq!(eq10.data_term, cons.data_term);
            let quad = (p.alpha * p.alpha + p.beta * p.beta) / (h.sigma_ab * h.sigma_ab)
                + (p.k_x * p.k_x + p.k_y * p.k_y) / (h.w_num * h.w_num)
                + h.sigma_s * (1.0 / p.s_x + p.s_x + 1.0 / p.s_y + p.s_y - 4.0);
            // eq10 carries the exponent terms at full weight, the exact prior at half
            // weight; every other difference is a parameter-free constant
            let constant = -(4.0 * PI * PI * h.sigma_ab.powi(2) * h.w_num.powi(2)).ln()
                - (2.0 * PI).ln() + h.sigma_s.ln() - h.b.ln() - 2f64.ln();
            let diff = eq10.neg_log_posterior - cons.neg_log_posterior;
            prop_assert!((diff - (0.5 * quad + constant)).abs() < 1e-9 * (1.0 + quad));
        }

        #[test]
        fn value_decomposition(p in mild_params()) {
            let img = scene(36, 28);
            let t = img.crop(Rect::new(9, 6, 13, 11)).unwrap();
            for mode in [PosteriorMode::Eq10, PosteriorMode::Consistent] {
                let o = neg_log_posterior(&img, &t, &p, 9, 6, &Hyperparams::default(), mode);
                if o.neg_log_posterior.is_finite() {
                    prop_assert_eq!(o.neg_log_posterior, o.data_term - o.log_prior);
                }
            }
        }
    }
}
