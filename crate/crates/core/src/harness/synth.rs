//! Synthetic recovery experiment: deform a crop of an image with known
//! parameters, paste it back, and match the original crop against the result.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{GrayImage, Rect};
use crate::optimize::{match_template, Decision, MatchConfig, MatchResult};
use crate::priors::{sample_prior, UniformBounds};
use crate::transform::{affine_matrix, warp_template, TransformParams};

use super::HarnessError;

pub const DEFAULT_TEMPLATE_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GroundTruth {
    Given(TransformParams),
    Prior(UniformBounds),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Template window; drawn from the seed when absent.
    pub rect: Option<Rect>,
    pub truth: GroundTruth,
    pub seed: u64,
}

/// Per-parameter absolute deviations; angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub rotation_deg: f64,
    pub translation: (f64, f64),
    pub translation_norm: f64,
    pub scale: (f64, f64),
    pub shear_deg: f64,
    pub amplitude: (f64, f64),
    pub wavenumber: (f64, f64),
    pub wave_center: (f64, f64),
}

/// Parameters as reported in tables: angles in degrees, translation as the
/// absolute image position of the template origin plus `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportedParams {
    pub rotation_deg: f64,
    pub translation: (f64, f64),
    pub scale: (f64, f64),
    pub shear_deg: f64,
    pub amplitude: (f64, f64),
    pub wavenumber: (f64, f64),
    pub wave_center: (f64, f64),
}

impl ReportedParams {
    fn new(p: &TransformParams, origin: (f64, f64)) -> Self {
        Self {
            rotation_deg: p.theta.to_degrees(),
            translation: (origin.0 + p.d_x, origin.1 + p.d_y),
            scale: (p.s_x, p.s_y),
            shear_deg: p.phi.to_degrees(),
            amplitude: (p.alpha, p.beta),
            wavenumber: (p.k_x, p.k_y),
            wave_center: (p.x0, p.y0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSummary {
    pub initial_value: f64,
    pub final_value: f64,
    pub data_term: f64,
    pub log_prior: f64,
    pub coverage: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub score: f64,
    pub threshold: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub seed: u64,
    pub rect: Rect,
    pub placement: (i64, i64),
    pub true_params: TransformParams,
    /// Estimate re-expressed relative to `rect`'s origin so it is directly
    /// comparable with `true_params`.
    pub estimated_params: TransformParams,
    pub actual: ReportedParams,
    pub estimated: ReportedParams,
    pub absolute_deviation: Deviation,
    pub objective: ObjectiveSummary,
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

/// Re-expresses parameters found at placement `(u, v)` relative to the
/// origin `(ox, oy)`: the lookup translation absorbs `A` times the offset
/// and the wave center moves with the frame.
pub fn reparameterize(
    p: &TransformParams,
    (u, v): (i64, i64),
    (ox, oy): (usize, usize),
    (w, h): (usize, usize),
) -> TransformParams {
    let dx = (u - ox as i64) as f64;
    let dy = (v - oy as i64) as f64;
    let a = affine_matrix(p.s_x, p.s_y, p.theta, p.phi).expect("estimate has valid shear");
    let (ax, ay) = a.apply(dx, dy);
    TransformParams {
        d_x: p.d_x - ax,
        d_y: p.d_y - ay,
        x0: p.x0 + dx / (w as f64 - 1.0).max(1.0),
        y0: p.y0 + dy / (h as f64 - 1.0).max(1.0),
        ..*p
    }
}

pub fn deviation(truth: &TransformParams, est: &TransformParams) -> Deviation {
    let t = (est.d_x - truth.d_x, est.d_y - truth.d_y);
    Deviation {
        rotation_deg: angle_diff(est.theta, truth.theta).abs().to_degrees(),
        translation: (t.0.abs(), t.1.abs()),
        translation_norm: t.0.hypot(t.1),
        scale: ((est.s_x - truth.s_x).abs(), (est.s_y - truth.s_y).abs()),
        shear_deg: angle_diff(est.phi, truth.phi).abs().to_degrees(),
        amplitude: (
            (est.alpha - truth.alpha).abs(),
            (est.beta - truth.beta).abs(),
        ),
        wavenumber: ((est.k_x - truth.k_x).abs(), (est.k_y - truth.k_y).abs()),
        wave_center: ((est.x0 - truth.x0).abs(), (est.y0 - truth.y0).abs()),
    }
}

/// Draws a template window of `size x size` away from the image border.
pub fn random_rect(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    size: usize,
) -> Result<Rect, HarnessError> {
    let margin = size / 4;
    if width < size + 2 * margin || height < size + 2 * margin {
        return Err(HarnessError::Invalid(format!(
            "image {width}x{height} too small for a {size}x{size} template"
        )));
    }
    let x0 = rng.random_range(margin..=width - size - margin);
    let y0 = rng.random_range(margin..=height - size - margin);
    Ok(Rect::new(x0, y0, size, size))
}

/// Composites the warped template over `image` at the rect origin.
pub fn render_deformed(
    image: &GrayImage,
    rect: Rect,
    xi: &TransformParams,
) -> Result<GrayImage, HarnessError> {
    let template = image.crop(rect)?;
    let patch = warp_template(&template, xi)?;
    let mut out = image.clone();
    for y in 0..rect.h {
        for x in 0..rect.w {
            let i = y * rect.w + x;
            if patch.valid[i] {
                out.set(rect.x0 + x, rect.y0 + y, patch.values[i]);
            }
        }
    }
    Ok(out)
}

pub fn synth_experiment(
    image: &GrayImage,
    spec: &SynthSpec,
    cfg: &MatchConfig,
) -> Result<RecoveryReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rect = match spec.rect {
        Some(r) => r,
        None => random_rect(
            &mut rng,
            image.width(),
            image.height(),
            DEFAULT_TEMPLATE_SIZE,
        )?,
    };
    let truth = match &spec.truth {
        GroundTruth::Given(p) => *p,
        GroundTruth::Prior(bounds) => sample_prior(&cfg.hyper, &mut rng, bounds)?,
    };
    truth.validate()?;

    let template = image.crop(rect)?;
    let working = render_deformed(image, rect, &truth)?;
    let result = match_template(&working, &template, cfg)?;
    Ok(build_report(spec.seed, rect, &truth, &result))
}

fn build_report(
    seed: u64,
    rect: Rect,
    truth: &TransformParams,
    result: &MatchResult,
) -> RecoveryReport {
    let placement = (result.placement.u, result.placement.v);
    let estimated = reparameterize(
        &result.refined.params,
        placement,
        (rect.x0, rect.y0),
        (rect.w, rect.h),
    );
    let origin = (rect.x0 as f64, rect.y0 as f64);
    RecoveryReport {
        seed,
        rect,
        placement,
        true_params: *truth,
        estimated_params: estimated,
        actual: ReportedParams::new(truth, origin),
        estimated: ReportedParams::new(&estimated, origin),
        absolute_deviation: deviation(truth, &estimated),
        objective: ObjectiveSummary {
            initial_value: result.initial_value,
            final_value: result.refined.value,
            data_term: result.objective.data_term,
            log_prior: result.objective.log_prior,
            coverage: result.objective.coverage,
            iterations: result.refined.iterations,
            evaluations: result.refined.evaluations,
            converged: result.refined.converged,
            score: result.score,
            threshold: result.threshold,
            decision: result.decision,
        },
    }
}
