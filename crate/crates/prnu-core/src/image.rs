//! Grayscale image container and geometry operations.
//!
//! Pixels are stored as `f64` in `[0, 255]` even though sources are 8-bit:
//! the perturbation engine takes sub-integer steps and quantizing every
//! iteration would destroy the optimization signal. Quantization back to
//! 8 bits happens only at export.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A grayscale image: row-major `f64` intensities in `[0, 255]`.
///
/// Instances are immutable after construction and safe to share across
/// threads; all operations return new images.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array2<f64>,
}

impl Image {
    /// Build an image from an intensity array, validating the `[0, 255]`
    /// range and that every value is finite.
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        let (h, w) = pixels.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidImage(format!("empty dimensions {h}x{w}")));
        }
        for &v in pixels.iter() {
            if !v.is_finite() || !(0.0..=255.0).contains(&v) {
                return Err(Error::InvalidImage(format!(
                    "pixel value {v} outside [0, 255]"
                )));
            }
        }
        Ok(Image { pixels })
    }

    /// Build an image by saturating an arbitrary real-valued array into
    /// `[0, 255]`. In-range values pass through bit-exactly.
    pub fn clamped(mut pixels: Array2<f64>) -> Self {
        for v in pixels.iter_mut() {
            *v = clamp_intensity(*v);
        }
        Image { pixels }
    }

    /// Constant-valued image.
    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Image::clamped(Array2::from_elem((height, width), value))
    }

    /// Decode a row-major byte raster (e.g. an 8-bit PGM payload).
    pub fn from_bytes(height: usize, width: usize, data: &[u8]) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "raster of {} bytes does not match {height}x{width}",
                data.len()
            )));
        }
        let pixels =
            Array2::from_shape_fn((height, width), |(r, c)| f64::from(data[r * width + c]));
        Image::new(pixels)
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[[row, col]]
    }

    /// Quantize to 8 bits: round half away from zero, then clamp.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Bilinear resize with pixel centers at half-integer positions
    /// (align-centers convention). Output values are clamped to `[0, 255]`.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Image> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::InvalidParams(format!(
                "resize target {out_h}x{out_w} must be at least 1x1"
            )));
        }
        let (h, w) = self.dims();
        let scale_y = h as f64 / out_h as f64;
        let scale_x = w as f64 / out_w as f64;
        let mut out = Array2::zeros((out_h, out_w));
        for i in 0..out_h {
            let sy = ((i as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let fy = sy - y0 as f64;
            for j in 0..out_w {
                let sx = ((j as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let fx = sx - x0 as f64;
                let top = self.pixels[[y0, x0]] * (1.0 - fx) + self.pixels[[y0, x1]] * fx;
                let bot = self.pixels[[y1, x0]] * (1.0 - fx) + self.pixels[[y1, x1]] * fx;
                out[[i, j]] = clamp_intensity(top * (1.0 - fy) + bot * fy);
            }
        }
        Ok(Image { pixels: out })
    }

    /// Saturate every pixel into `[0, 255]`.
    pub fn clamp(&self) -> Image {
        Image::clamped(self.pixels.clone())
    }

    pub(crate) fn expect_dims(&self, h: usize, w: usize) -> Result<()> {
        if self.dims() != (h, w) {
            return Err(Error::DimensionMismatch {
                expected_h: h,
                expected_w: w,
                got_h: self.height(),
                got_w: self.width(),
            });
        }
        Ok(())
    }
}

/// Saturate a single intensity into `[0, 255]`.
pub fn clamp_intensity(v: f64) -> f64 {
    v.clamp(0.0, 255.0)
}

/// Luma weights used when collapsing RGB inputs to grayscale.
pub(crate) fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
}
