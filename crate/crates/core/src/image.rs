//! Grayscale images, binary PGM I/O and sub-pixel sampling.
//!
//! Intensities are stored as `f64` in `[0, 1]` regardless of the source
//! bit depth. Pixel centers sit on integer coordinates, so the sampling
//! domain of a `w x h` image is `[0, w-1] x [0, h-1]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported magic {0:?}, expected \"P5\"")]
    UnsupportedMagic(String),
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("data length {len} does not match {width}x{height}")]
    LengthMismatch {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("intensity {value} at index {index} outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f64 },
    #[error("rect {rect:?} exceeds image bounds {width}x{height}")]
    RectOutOfBounds {
        rect: Rect,
        width: usize,
        height: usize,
    },
}

/// Rectangular window in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x0.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y0.checked_add(self.h).is_some_and(|b| b <= height)
    }
}

/// Row-major grid of intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::LengthMismatch {
                len: data.len(),
                width,
                height,
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::IntensityOutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant-valued image. `value` is clamped into `[0, 1]`.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value.clamp(0.0, 1.0); width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel, clamping into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sets a pixel, clamping the value into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Bilinear interpolation of the four pixels around `(x, y)`.
    ///
    /// Returns `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        // Also rejects NaN.
        if !(x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);

        let top = if fx == 0.0 {
            self.get(x0, y0)
        } else {
            self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx
        };
        if fy == 0.0 {
            return Some(top);
        }
        let bottom = if fx == 0.0 {
            self.get(x0, y1)
        } else {
            self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx
        };
        Some(top * (1.0 - fy) + bottom * fy)
    }

    pub fn crop(&self, r: Rect) -> Result<GrayImage, ImageError> {
        if !r.fits_in(self.width, self.height) {
            return Err(ImageError::RectOutOfBounds {
                rect: r,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(r.w * r.h);
        for y in r.y0..r.y0 + r.h {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + r.x0..row + r.x0 + r.w]);
        }
        Ok(GrayImage {
            width: r.w,
            height: r.h,
            data,
        })
    }
}

/// Free-function form of [`GrayImage::sample_bilinear`].
pub fn sample_bilinear(img: &GrayImage, x: f64, y: f64) -> Option<f64> {
    img.sample_bilinear(x, y)
}

/// Free-function form of [`GrayImage::crop`].
pub fn crop(img: &GrayImage, r: Rect) -> Result<GrayImage, ImageError> {
    img.crop(r)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes)
}

/// Decodes a binary (P5) PGM. 16-bit samples are big-endian.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.len() < 2 {
        return Err(ImageError::MalformedHeader("file too short".into()));
    }
    if &bytes[..2] != b"P5" {
        return Err(ImageError::UnsupportedMagic(
            String::from_utf8_lossy(&bytes[..2]).into_owned(),
        ));
    }

    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = read_header_uint(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(ImageError::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    if width == 0 || height == 0 {
        return Err(ImageError::InvalidDimensions { width, height });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::MalformedHeader(format!(
            "maxval {maxval} outside 1..=65535"
        )));
    }

    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * bytes_per_sample;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            found: raster.len(),
        });
    }

    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = if bytes_per_sample == 1 {
        raster[..expected]
            .iter()
            .map(|&b| (b as usize).min(maxval) as f64 * scale)
            .collect()
    } else {
        raster[..expected]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as usize).min(maxval) as f64 * scale)
            .collect()
    };
    GrayImage::new(width, height, data)
}

fn read_header_uint(bytes: &[u8], pos: &mut usize) -> Result<usize, ImageError> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => {
                return Err(ImageError::MalformedHeader(
                    "unexpected end of header".into(),
                ))
            }
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::MalformedHeader(format!(
            "expected a number at byte {start}"
        )));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::MalformedHeader("number out of range".into()))
}

/// Encodes as P5 with maxval 255, quantizing by `round(255 v)` (half rounds up).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data.iter().map(|&v| quantize(v)));
    out
}

#[inline]
fn quantize(v: f64) -> u8 {
    (255.0 * v + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_pgm(img))?;
    Ok(())
}
