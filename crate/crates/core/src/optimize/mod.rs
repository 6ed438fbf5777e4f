//! MAP estimation: exhaustive placement search followed by simplex refinement
//! of all twelve transformation parameters.

mod search;
mod simplex;

pub use search::{translation_search, translation_search_with_floor, Placement};
pub use simplex::{nelder_mead, SimplexConfig, SimplexError, SimplexResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;
use crate::objective::{Objective, ObjectiveValue, PosteriorMode, DEFAULT_COVERAGE_FLOOR};
use crate::priors::{Hyperparams, PriorError};
use crate::transform::{TransformError, TransformParams};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("stride must be at least 1")]
    InvalidStride,
    #[error("no placement reaches the coverage floor")]
    NoFeasiblePlacement,
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

/// Order of the optimizer's search vector. Scales are searched in log space.
pub const SEARCH_NAMES: [&str; 12] = [
    "ln_s_x", "ln_s_y", "theta", "phi", "alpha", "beta", "k_x", "k_y", "x0", "y0", "d_x", "d_y",
];

pub fn to_search_vector(p: &TransformParams) -> [f64; 12] {
    [
        p.s_x.ln(),
        p.s_y.ln(),
        p.theta,
        p.phi,
        p.alpha,
        p.beta,
        p.k_x,
        p.k_y,
        p.x0,
        p.y0,
        p.d_x,
        p.d_y,
    ]
}

pub fn from_search_vector(z: &[f64]) -> TransformParams {
    TransformParams {
        s_x: z[0].exp(),
        s_y: z[1].exp(),
        theta: z[2],
        phi: z[3],
        alpha: z[4],
        beta: z[5],
        k_x: z[6],
        k_y: z[7],
        x0: z[8],
        y0: z[9],
        d_x: z[10],
        d_y: z[11],
    }
}

/// Search-vector indices of the affine part: log-scales, angles, translation.
pub const AFFINE_INDICES: [usize; 6] = [0, 1, 2, 3, 10, 11];

/// Initial simplex offsets in search-vector order.
pub fn default_search_steps() -> Vec<f64> {
    let deg = 2f64.to_radians();
    vec![
        0.05, 0.05, deg, deg, 1.0, 1.0, 0.005, 0.005, 0.05, 0.05, 1.0, 1.0,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub hyper: Hyperparams,
    pub simplex: SimplexConfig,
    pub stride: usize,
    pub mode: PosteriorMode,
    pub coverage_floor: f64,
    /// Acceptance threshold on the per-pixel mean data term.
    pub match_threshold: f64,
    /// Fit the affine part alone, with the local deformation held at zero,
    /// before refining all twelve parameters.
    pub affine_warmup: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparams::default(),
            simplex: SimplexConfig {
                restarts: 10,
                ..SimplexConfig::with_steps(default_search_steps())
            },
            stride: 1,
            mode: PosteriorMode::Eq10,
            coverage_floor: DEFAULT_COVERAGE_FLOOR,
            match_threshold: 0.05,
            affine_warmup: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub params: TransformParams,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Option<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Matched,
    NotMatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub placement: Placement,
    pub initial_value: f64,
    pub refined: OptResult,
    pub objective: ObjectiveValue,
    /// `objective.data_term / objective.n_valid`, compared against `threshold`.
    pub score: f64,
    pub threshold: f64,
    pub decision: Decision,
}

impl MatchResult {
    /// Placement plus the continuous translation refinement.
    pub fn total_translation(&self) -> (f64, f64) {
        (
            self.placement.u as f64 + self.refined.params.d_x,
            self.placement.v as f64 + self.refined.params.d_y,
        )
    }
}

/// Objective over the search vector at a fixed placement. Parameters that
/// violate [`TransformParams::validate`] evaluate to `+inf`.
pub fn search_objective<'a>(
    objective: &'a Objective<'a>,
    u: i64,
    v: i64,
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |z: &[f64]| {
        let p = from_search_vector(z);
        if p.validate().is_err() {
            return f64::INFINITY;
        }
        objective.evaluate(&p, u, v).neg_log_posterior
    }
}

pub fn match_template(
    image: &GrayImage,
    template: &GrayImage,
    cfg: &MatchConfig,
) -> Result<MatchResult, OptimizeError> {
    cfg.hyper.validate()?;
    cfg.simplex.validate()?;
    let start = TransformParams::identity();
    let placement = translation_search_with_floor(
        image,
        template,
        &start,
        cfg.stride,
        &cfg.hyper,
        cfg.coverage_floor,
    )?;
    let (u, v) = (placement.u, placement.v);

    let objective = Objective::new(image, template, cfg.hyper, cfg.mode)
        .with_coverage_floor(cfg.coverage_floor);
    let f = search_objective(&objective, u, v);
    let z0 = to_search_vector(&start);
    let initial_value = f(&z0);
    let simplex_cfg = if cfg.simplex.init_steps.is_empty() {
        SimplexConfig {
            init_steps: default_search_steps(),
            ..cfg.simplex.clone()
        }
    } else {
        cfg.simplex.clone()
    };
    let (r, warmup) = refine(&f, &z0, &simplex_cfg, cfg.affine_warmup)?;
    let params = from_search_vector(&r.x);
    let value = objective.evaluate(&params, u, v);
    let score = value.data_term / value.n_valid.max(1) as f64;
    let decision = if value.n_valid > 0 && score <= cfg.match_threshold {
        Decision::Matched
    } else {
        Decision::NotMatched
    };
    Ok(MatchResult {
        placement,
        initial_value,
        refined: OptResult {
            params,
            value: value.neg_log_posterior,
            iterations: r.iterations + warmup.as_ref().map_or(0, |w| w.iterations),
            evaluations: r.evaluations + warmup.as_ref().map_or(0, |w| w.evaluations),
            converged: r.converged,
            trace: merge_traces(warmup.and_then(|w| w.trace), r.trace),
        },
        objective: value,
        score,
        threshold: cfg.match_threshold,
        decision,
    })
}

/// Optional affine-only pass followed by the full twelve-parameter simplex.
/// The deformation enters the affine fit only through the start point, so
/// the first pass cannot be derailed by amplitudes that mimic a translation
/// while the wavenumbers are still near zero.
fn refine<F: Fn(&[f64]) -> f64>(
    f: &F,
    z0: &[f64; 12],
    cfg: &SimplexConfig,
    warmup: bool,
) -> Result<(SimplexResult, Option<SimplexResult>), OptimizeError> {
    if !warmup {
        return Ok((nelder_mead(f, z0, cfg)?, None));
    }
    let embed = |s: &[f64]| {
        let mut z = *z0;
        for (k, &i) in AFFINE_INDICES.iter().enumerate() {
            z[i] = s[k];
        }
        z
    };
    let sub_cfg = SimplexConfig {
        init_steps: AFFINE_INDICES.iter().map(|&i| cfg.init_steps[i]).collect(),
        ..cfg.clone()
    };
    let s0: Vec<f64> = AFFINE_INDICES.iter().map(|&i| z0[i]).collect();
    let first = nelder_mead(|s: &[f64]| f(&embed(s)), &s0, &sub_cfg)?;
    let full = nelder_mead(f, &embed(&first.x), cfg)?;
    Ok((full, Some(first)))
}

/// Concatenates the traces of both passes on a common iteration axis.
fn merge_traces(
    first: Option<Vec<(usize, f64)>>,
    second: Option<Vec<(usize, f64)>>,
) -> Option<Vec<(usize, f64)>> {
    match (first, second) {
        (Some(mut a), Some(b)) => {
            let offset = a.last().map_or(0, |&(i, _)| i);
            a.extend(b.into_iter().map(|(i, v)| (i + offset, v)));
            Some(a)
        }
        (a, b) => b.or(a),
    }
}
