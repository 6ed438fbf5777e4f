//! Affine plus sinusoidal template deformation.
//!
//! The warp is a coordinate lookup: the warped patch at template pixel
//! `(x, y)` takes the template's value at
//!
//! ```text
//! A (p - c) + c + D(p) + d,   A = S R U,   c = ((w-1)/2, (h-1)/2)
//! ```
//!
//! so scales, rotation and shear act about the template center. Because
//! this is a lookup, the visible effect on the patch is the inverse of `A`:
//! `s_x = 2` shows the object at half width.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("shear angle {0} rad is outside (-pi/2, pi/2)")]
    ShearOutOfDomain(f64),
    #[error("scale ({0}, {1}) must be strictly positive")]
    NonPositiveScale(f64, f64),
    #[error("wave center ({0}, {1}) outside [0, 1]^2")]
    WaveCenterOutOfDomain(f64, f64),
    #[error("non-finite parameter {0}")]
    NonFinite(&'static str),
}

/// The twelve transformation parameters.
///
/// Angles in radians, amplitudes and translations in pixels, wavenumbers in
/// cycles per pixel, wave center normalized to the template extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub s_x: f64,
    pub s_y: f64,
    pub theta: f64,
    pub phi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k_x: f64,
    pub k_y: f64,
    pub x0: f64,
    pub y0: f64,
    pub d_x: f64,
    pub d_y: f64,
}

impl Default for TransformParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl TransformParams {
    pub const NAMES: [&'static str; 12] = [
        "s_x", "s_y", "theta", "phi", "alpha", "beta", "k_x", "k_y", "x0", "y0", "d_x", "d_y",
    ];

    pub const fn identity() -> Self {
        Self {
            s_x: 1.0,
            s_y: 1.0,
            theta: 0.0,
            phi: 0.0,
            alpha: 0.0,
            beta: 0.0,
            k_x: 0.0,
            k_y: 0.0,
            x0: 0.5,
            y0: 0.5,
            d_x: 0.0,
            d_y: 0.0,
        }
    }

    pub fn translation(d_x: f64, d_y: f64) -> Self {
        Self {
            d_x,
            d_y,
            ..Self::identity()
        }
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        for (name, v) in Self::NAMES.iter().zip(self.to_array()) {
            if !v.is_finite() {
                return Err(TransformError::NonFinite(name));
            }
        }
        if self.s_x <= 0.0 || self.s_y <= 0.0 {
            return Err(TransformError::NonPositiveScale(self.s_x, self.s_y));
        }
        if self.phi.abs() >= FRAC_PI_2 {
            return Err(TransformError::ShearOutOfDomain(self.phi));
        }
        if !(0.0..=1.0).contains(&self.x0) || !(0.0..=1.0).contains(&self.y0) {
            return Err(TransformError::WaveCenterOutOfDomain(self.x0, self.y0));
        }
        Ok(())
    }

    /// Values in [`Self::NAMES`] order.
    pub fn to_array(&self) -> [f64; 12] {
        [
            self.s_x, self.s_y, self.theta, self.phi, self.alpha, self.beta, self.k_x, self.k_y,
            self.x0, self.y0, self.d_x, self.d_y,
        ]
    }

    pub fn from_array(v: [f64; 12]) -> Self {
        Self {
            s_x: v[0],
            s_y: v[1],
            theta: v[2],
            phi: v[3],
            alpha: v[4],
            beta: v[5],
            k_x: v[6],
            k_y: v[7],
            x0: v[8],
            y0: v[9],
            d_x: v[10],
            d_y: v[11],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.to_array()[i])
    }

    /// Sets a parameter by name; returns `false` for unknown names.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        match Self::NAMES.iter().position(|n| *n == name) {
            Some(i) => {
                let mut v = self.to_array();
                v[i] = value;
                *self = Self::from_array(v);
                true
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.a11 * x + self.a12 * y, self.a21 * x + self.a22 * y)
    }
}

/// `S R U_x` with counter-clockwise rotation and x-axis shear.
pub fn affine_matrix(s_x: f64, s_y: f64, theta: f64, phi: f64) -> Result<Mat2, TransformError> {
    if phi.abs() >= FRAC_PI_2 || !phi.is_finite() {
        return Err(TransformError::ShearOutOfDomain(phi));
    }
    let scale = Mat2::new(s_x, 0.0, 0.0, s_y);
    let (sin, cos) = theta.sin_cos();
    let rot = Mat2::new(cos, -sin, sin, cos);
    let shear = Mat2::new(1.0, phi.tan(), 0.0, 1.0);
    Ok(scale.mul(&rot).mul(&shear))
}

/// Radially phased sinusoidal displacement at template pixel `(x, y)`.
#[inline]
pub fn local_displacement(
    params: &TransformParams,
    x: f64,
    y: f64,
    w: usize,
    h: usize,
) -> (f64, f64) {
    let cx = params.x0 * (w as f64 - 1.0);
    let cy = params.y0 * (h as f64 - 1.0);
    let delta = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
    (
        params.alpha * (2.0 * PI * params.k_x * delta).cos(),
        params.beta * (2.0 * PI * params.k_y * delta).cos(),
    )
}

/// Precomputed per-parameter state for evaluating the lookup map on a grid.
#[derive(Debug, Clone, Copy)]
pub struct Warp {
    params: TransformParams,
    matrix: Mat2,
    w: usize,
    h: usize,
    center: (f64, f64),
}

impl Warp {
    pub fn new(params: &TransformParams, w: usize, h: usize) -> Result<Self, TransformError> {
        let matrix = affine_matrix(params.s_x, params.s_y, params.theta, params.phi)?;
        Ok(Self {
            params: *params,
            matrix,
            w,
            h,
            center: ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0),
        })
    }

    pub fn matrix(&self) -> Mat2 {
        self.matrix
    }

    #[inline]
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let (cx, cy) = self.center;
        let (ax, ay) = self.matrix.apply(x - cx, y - cy);
        let (dx, dy) = if self.params.alpha == 0.0 && self.params.beta == 0.0 {
            (0.0, 0.0)
        } else {
            local_displacement(&self.params, x, y, self.w, self.h)
        };
        (
            ax + cx + dx + self.params.d_x,
            ay + cy + dy + self.params.d_y,
        )
    }
}

/// Template-frame point to template-source point (the argument of `F0`).
pub fn map_point(
    params: &TransformParams,
    x: f64,
    y: f64,
    w: usize,
    h: usize,
) -> Result<(f64, f64), TransformError> {
    Ok(Warp::new(params, w, h)?.map(x, y))
}

/// Template warped by `params`, with a validity mask for samples that fell
/// outside the template.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedPatch {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub coverage: f64,
}

impl WarpedPatch {
    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

pub fn warp_template(
    template: &GrayImage,
    params: &TransformParams,
) -> Result<WarpedPatch, TransformError> {
    let (w, h) = (template.width(), template.height());
    let warp = Warp::new(params, w, h)?;
    let mut values = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (qx, qy) = warp.map(x as f64, y as f64);
            match template.sample_bilinear(qx, qy) {
                Some(v) => {
                    values.push(v);
                    valid.push(true);
                    count += 1;
                }
                None => {
                    values.push(0.0);
                    valid.push(false);
                }
            }
        }
    }
    Ok(WarpedPatch {
        width: w,
        height: h,
        values,
        valid,
        coverage: count as f64 / (w * h) as f64,
    })
}
