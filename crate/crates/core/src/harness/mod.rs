//! Experiment drivers: scale-surface sweeps, synthetic parameter recovery
//! and prior self-checks.

pub mod priors_check;
pub mod scene;
pub mod surface;
pub mod synth;

use thiserror::Error;

use crate::image::ImageError;
use crate::optimize::OptimizeError;
use crate::priors::PriorError;
use crate::transform::TransformError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("{0}")]
    Invalid(String),
}
