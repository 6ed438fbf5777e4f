//! Bayesian, affine-invariant deformable template matching for grayscale images.
//!
//! A prototype template is warped by an affine map composed of anisotropic
//! scale, rotation and x-shear, plus a radially phased sinusoidal
//! displacement field. The warped template is scored against the image with
//! a smooth Huber loss, combined with priors that keep scale away from zero
//! and shear away from `±pi/2`, and the negative log-posterior is minimized
//! by an exhaustive placement search followed by Nelder–Mead.

pub mod config;
pub mod harness;
pub mod image;
pub mod objective;
pub mod optimize;
pub mod priors;
pub mod transform;

pub use config::{load_config, parse_config, ConfigError};
pub use image::{crop, load_pgm, sample_bilinear, save_pgm, GrayImage, ImageError, Rect};
pub use objective::{
    bessel_k1, data_term, likelihood, neg_log_posterior, smooth_huber, ObjectiveValue,
    PosteriorMode,
};
pub use optimize::{
    match_template, nelder_mead, translation_search, MatchConfig, MatchResult, SimplexConfig,
};
pub use priors::{log_prior_total, sample_prior, Hyperparams, UniformBounds};
pub use transform::{
    affine_matrix, local_displacement, map_point, warp_template, Mat2, TransformParams, WarpedPatch,
};
