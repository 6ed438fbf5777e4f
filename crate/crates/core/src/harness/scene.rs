//! Deterministic procedural test imagery.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::GrayImage;

pub const SCENE_WIDTH: usize = 256;
pub const SCENE_HEIGHT: usize = 256;
const SCENE_SEED: u64 = 0x5eed_1a6e;

struct Blob {
    cx: f64,
    cy: f64,
    sx: f64,
    sy: f64,
    rot: f64,
    amp: f64,
}

struct Ripple {
    cx: f64,
    cy: f64,
    radius: f64,
    freq: f64,
    dir: f64,
    amp: f64,
}

/// Amplitude of the column texture inside the banded panel.
pub const PANEL_WEAVE: f64 = 0.002;

/// Interior of the horizontally banded panel in [`procedural_scene`].
pub const BANDED_PANEL: (usize, usize, usize, usize) = (24, 160, 112, 80);

/// Smooth gradients, anisotropic Gaussian blobs and a few localized
/// ripple textures, scaled into `[0.05, 0.95]`, plus one panel of
/// horizontal bands (like the brows, eyes and mouth of a face) whose
/// intensity varies with `y` apart from a faint column weave.
pub fn procedural_scene() -> GrayImage {
    let img = procedural_scene_sized(SCENE_WIDTH, SCENE_HEIGHT, SCENE_SEED);
    with_banded_panel(&img, BANDED_PANEL)
}

/// Blends horizontal bands into `(x, y, w, h)`, fading out over 6 pixels
/// beyond its edges.
fn with_banded_panel(img: &GrayImage, (px, py, pw, ph): (usize, usize, usize, usize)) -> GrayImage {
    let fade = 6.0;
    let ramp = |t: f64, lo: f64, hi: f64| {
        let outside = (lo - t).max(t - hi).max(0.0);
        (1.0 - outside / fade).clamp(0.0, 1.0)
    };
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let m =
            ramp(xf, px as f64, (px + pw - 1) as f64) * ramp(yf, py as f64, (py + ph - 1) as f64);
        if m == 0.0 {
            return img.get(x, y);
        }
        let t = yf - py as f64;
        let band =
            0.5 + 0.25 * (2.0 * PI * t / 18.0).cos() + 0.12 * (2.0 * PI * t / 7.0 + 0.8).cos();
        // faint vertical weave, about half an 8-bit grey level
        let weave = PANEL_WEAVE * (2.0 * PI * (xf - px as f64) / 4.3).cos();
        (1.0 - m) * img.get(x, y) + m * (band + weave)
    })
    .expect("blend of values in [0, 1]")
}

pub fn procedural_scene_sized(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let area_scale = (w * h).sqrt() / 256.0;

    let n_blobs = ((60.0 * area_scale * area_scale).round() as usize).max(4);
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|_| Blob {
            cx: rng.random_range(-0.05 * w..1.05 * w),
            cy: rng.random_range(-0.05 * h..1.05 * h),
            sx: rng.random_range(3.0..14.0),
            sy: rng.random_range(3.0..14.0),
            rot: rng.random_range(0.0..PI),
            amp: rng.random_range(-1.0..1.0),
        })
        .collect();
    let n_ripples = ((8.0 * area_scale * area_scale).round() as usize).max(1);
    let ripples: Vec<Ripple> = (0..n_ripples)
        .map(|_| Ripple {
            cx: rng.random_range(0.0..w),
            cy: rng.random_range(0.0..h),
            radius: rng.random_range(12.0..30.0),
            freq: rng.random_range(0.03..0.08),
            dir: rng.random_range(0.0..PI),
            amp: rng.random_range(0.2..0.5),
        })
        .collect();
    let gx = rng.random_range(-1.0..1.0);
    let gy = rng.random_range(-1.0..1.0);

    let raw: Vec<f64> = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x as f64, y as f64)))
        .map(|(x, y)| {
            let mut v = 0.6 * (gx * (x / w - 0.5) + gy * (y / h - 0.5));
            v += 0.25 * (2.0 * PI * x / w).sin() * (1.5 * PI * y / h + 0.3).cos();
            for b in &blobs {
                let (s, c) = b.rot.sin_cos();
                let (dx, dy) = (x - b.cx, y - b.cy);
                let (rx, ry) = (c * dx + s * dy, -s * dx + c * dy);
                v += b.amp * (-0.5 * (rx * rx / (b.sx * b.sx) + ry * ry / (b.sy * b.sy))).exp();
            }
            for r in &ripples {
                let (dx, dy) = (x - r.cx, y - r.cy);
                let envelope = (-(dx * dx + dy * dy) / (2.0 * r.radius * r.radius)).exp();
                let phase = 2.0 * PI * r.freq * (dx * r.dir.cos() + dy * r.dir.sin());
                v += r.amp * envelope * phase.cos();
            }
            v
        })
        .collect();

    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::EPSILON);
    let data = raw.iter().map(|v| 0.05 + 0.9 * (v - lo) / span).collect();
    GrayImage::new(width, height, data).expect("values scaled into [0.05, 0.95]")
}

/// Adds i.i.d. Gaussian noise, clamping into `[0, 1]`.
pub fn add_noise(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        img.get(x, y) + normal.sample(&mut rng)
    })
    .expect("clamped")
}
