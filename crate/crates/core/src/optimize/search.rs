use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::objective::{data_term_patch, DEFAULT_COVERAGE_FLOOR};
use crate::priors::Hyperparams;
use crate::transform::{warp_template, TransformParams};

use super::OptimizeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub u: i64,
    pub v: i64,
    pub s_min: f64,
}

/// Exhaustive data-term search over integer placements.
///
/// Placements keep the template rectangle inside the image and step by
/// `stride` from the top-left corner. Placements whose coverage falls below
/// `coverage_floor` are skipped. Ties go to the smallest `u`, then `v`.
pub fn translation_search_with_floor(
    image: &GrayImage,
    template: &GrayImage,
    base_params: &TransformParams,
    stride: usize,
    hyper: &Hyperparams,
    coverage_floor: f64,
) -> Result<Placement, OptimizeError> {
    if stride == 0 {
        return Err(OptimizeError::InvalidStride);
    }
    if template.width() > image.width() || template.height() > image.height() {
        return Err(OptimizeError::NoFeasiblePlacement);
    }
    let patch = warp_template(template, base_params)?;
    let us: Vec<i64> = (0..=image.width() - template.width())
        .step_by(stride)
        .map(|u| u as i64)
        .collect();
    let vs: Vec<i64> = (0..=image.height() - template.height())
        .step_by(stride)
        .map(|v| v as i64)
        .collect();

    let cells: Vec<Option<Placement>> = us
        .par_iter()
        .flat_map_iter(|&u| {
            let patch = &patch;
            vs.iter().map(move |&v| {
                let dt = data_term_patch(image, patch, u, v, hyper.tau);
                (dt.n_valid > 0 && dt.coverage >= coverage_floor).then_some(Placement {
                    u,
                    v,
                    s_min: dt.value,
                })
            })
        })
        .collect();

    // cells are in (u, v) lexicographic order, so the first strict minimum wins ties
    cells
        .into_iter()
        .flatten()
        .fold(None, |best: Option<Placement>, p| match best {
            Some(b) if b.s_min <= p.s_min => Some(b),
            _ => Some(p),
        })
        .ok_or(OptimizeError::NoFeasiblePlacement)
}

/// [`translation_search_with_floor`] at the default coverage floor.
pub fn translation_search(
    image: &GrayImage,
    template: &GrayImage,
    base_params: &TransformParams,
    stride: usize,
    hyper: &Hyperparams,
) -> Result<Placement, OptimizeError> {
    translation_search_with_floor(
        image,
        template,
        base_params,
        stride,
        hyper,
        DEFAULT_COVERAGE_FLOOR,
    )
}
