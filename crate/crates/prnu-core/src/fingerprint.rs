//! Reference-pattern estimation and sensor attribution.
//!
//! A sensor's fingerprint is the maximum-likelihood aggregate of the noise
//! residuals of its training images, `K[p] = sum_i w_i[p] I_i[p] / sum_i
//! I_i[p]^2`, cleaned by a zero-mean pass (suppresses interpolation
//! artifacts) and a frequency-domain Wiener pass (suppresses periodic
//! artifacts). Attribution correlates a test residual against every pattern
//! in a gallery and picks the maximum.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::denoise::{residual, DenoiseParams, NoiseResidual};
use crate::error::{Error, Result};
use crate::image::Image;

/// Whether pattern cleanup runs once on the aggregated estimate or on each
/// residual before aggregation. The final-pattern form is the default; the
/// per-residual form exists for sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PostprocessMode {
    #[default]
    FinalPattern,
    PerResidual,
}

/// An estimated sensor fingerprint.
#[derive(Debug, Clone)]
pub struct ReferencePattern {
    pub values: Array2<f64>,
    pub sensor_id: String,
    /// Number of training images aggregated into the estimate.
    pub train_count: usize,
    /// True once the zero-mean and Wiener cleanup passes have run.
    pub postprocessed: bool,
}

impl ReferencePattern {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// A named, dimension-consistent set of reference patterns.
#[derive(Debug, Clone)]
pub struct SensorGallery {
    patterns: Vec<ReferencePattern>,
}

impl SensorGallery {
    pub fn new(patterns: Vec<ReferencePattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::EmptyGallery);
        }
        let dims = patterns[0].dims();
        for p in &patterns {
            if p.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected_h: dims.0,
                    expected_w: dims.1,
                    got_h: p.dims().0,
                    got_w: p.dims().1,
                });
            }
        }
        for (i, p) in patterns.iter().enumerate() {
            if patterns[..i].iter().any(|q| q.sensor_id == p.sensor_id) {
                return Err(Error::DuplicateSensorId(p.sensor_id.clone()));
            }
        }
        Ok(SensorGallery { patterns })
    }

    /// Load every `*.prnu` file in a directory, in filename order.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(dir, e))?
            .into_iter()
            .map(|entry| entry.path())
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("prnu"))
            .collect();
        paths.sort();
        let patterns = paths
            .iter()
            .map(|p| load_pattern(p))
            .collect::<Result<Vec<_>>>()?;
        SensorGallery::new(patterns)
    }

    pub fn patterns(&self) -> &[ReferencePattern] {
        &self.patterns
    }

    pub fn dims(&self) -> (usize, usize) {
        self.patterns[0].dims()
    }

    pub fn get(&self, sensor_id: &str) -> Result<&ReferencePattern> {
        self.patterns
            .iter()
            .find(|p| p.sensor_id == sensor_id)
            .ok_or_else(|| Error::UnknownSensor(sensor_id.to_string()))
    }
}

/// A correlation score against one sensor's pattern; always in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NCCScore {
    pub sensor_id: String,
    pub value: f64,
}

/// Subtract per-column means, then per-row means. Both row and column means
/// of the result are zero.
pub fn zero_mean(pattern: &Array2<f64>) -> Array2<f64> {
    let (h, w) = pattern.dim();
    let mut out = pattern.clone();
    for c in 0..w {
        let mean = (0..h).map(|r| out[[r, c]]).sum::<f64>() / h as f64;
        for r in 0..h {
            out[[r, c]] -= mean;
        }
    }
    for r in 0..h {
        let mean = (0..w).map(|c| out[[r, c]]).sum::<f64>() / w as f64;
        for c in 0..w {
            out[[r, c]] -= mean;
        }
    }
    out
}

fn fft2(plane: &Array2<f64>) -> Array2<Complex<f64>> {
    let (h, w) = plane.dim();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);

    let mut data = plane.mapv(|v| Complex::new(v, 0.0));
    let mut buf = vec![Complex::new(0.0, 0.0); w.max(h)];
    for mut row in data.rows_mut() {
        buf[..w].copy_from_slice(row.as_slice().expect("row-major layout"));
        row_fft.process(&mut buf[..w]);
        row.as_slice_mut().unwrap().copy_from_slice(&buf[..w]);
    }
    for c in 0..w {
        for r in 0..h {
            buf[r] = data[[r, c]];
        }
        col_fft.process(&mut buf[..h]);
        for r in 0..h {
            data[[r, c]] = buf[r];
        }
    }
    data
}

fn ifft2_real(mut data: Array2<Complex<f64>>) -> Array2<f64> {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_inverse(w);
    let col_fft = planner.plan_fft_inverse(h);

    let mut buf = vec![Complex::new(0.0, 0.0); w.max(h)];
    for c in 0..w {
        for r in 0..h {
            buf[r] = data[[r, c]];
        }
        col_fft.process(&mut buf[..h]);
        for r in 0..h {
            data[[r, c]] = buf[r];
        }
    }
    for mut row in data.rows_mut() {
        buf[..w].copy_from_slice(row.as_slice().unwrap());
        row_fft.process(&mut buf[..w]);
        row.as_slice_mut().unwrap().copy_from_slice(&buf[..w]);
    }
    let norm = 1.0 / (h * w) as f64;
    data.mapv(|v| v.re * norm)
}

/// Frequency-domain cleanup: estimate the spectral component whose power
/// exceeds the pattern's own global variance (periodic artifacts show up as
/// such peaks) and subtract it. White content passes through almost
/// unchanged.
pub fn wiener_dft(pattern: &Array2<f64>) -> Array2<f64> {
    let n = pattern.len() as f64;
    let noise_var = pattern.iter().map(|v| v * v).sum::<f64>() / n;
    if noise_var == 0.0 {
        return pattern.clone();
    }
    let mut spectrum = fft2(pattern);
    for v in spectrum.iter_mut() {
        let power = v.norm_sqr() / n;
        let excess = (power - noise_var).max(0.0);
        *v *= excess / (excess + noise_var);
    }
    let artifact = ifft2_real(spectrum);
    pattern - &artifact
}

/// Raw maximum-likelihood aggregate, before any post-processing. Pixels
/// that are dark in every training image (zero denominator) map to zero.
pub fn mle_accumulate(train: &[Image], params: &DenoiseParams) -> Result<Array2<f64>> {
    mle_accumulate_mode(train, params, PostprocessMode::FinalPattern)
}

fn mle_accumulate_mode(
    train: &[Image],
    params: &DenoiseParams,
    mode: PostprocessMode,
) -> Result<Array2<f64>> {
    let first = train.first().ok_or(Error::EmptyTrainingSet)?;
    let dims = first.dims();
    for img in train {
        img.expect_dims(dims.0, dims.1)?;
    }
    let residuals: Vec<NoiseResidual> = train
        .par_iter()
        .map(|img| residual(img, params))
        .collect::<Result<Vec<_>>>()?;

    let mut numerator = Array2::<f64>::zeros(dims);
    let mut denominator = Array2::<f64>::zeros(dims);
    for (img, res) in train.iter().zip(&residuals) {
        let w = match mode {
            PostprocessMode::FinalPattern => res.values.clone(),
            PostprocessMode::PerResidual => wiener_dft(&zero_mean(&res.values)),
        };
        for ((n, d), (&wv, &iv)) in numerator
            .iter_mut()
            .zip(denominator.iter_mut())
            .zip(w.iter().zip(img.pixels().iter()))
        {
            *n += wv * iv;
            *d += iv * iv;
        }
    }
    for (n, &d) in numerator.iter_mut().zip(denominator.iter()) {
        *n = if d == 0.0 { 0.0 } else { *n / d };
    }
    Ok(numerator)
}

/// Estimate a sensor's reference pattern from its training images.
pub fn estimate_reference(
    train: &[Image],
    params: &DenoiseParams,
    sensor_id: &str,
) -> Result<ReferencePattern> {
    estimate_reference_mode(train, params, sensor_id, PostprocessMode::FinalPattern)
}

/// [`estimate_reference`] with an explicit cleanup placement.
pub fn estimate_reference_mode(
    train: &[Image],
    params: &DenoiseParams,
    sensor_id: &str,
    mode: PostprocessMode,
) -> Result<ReferencePattern> {
    let raw = mle_accumulate_mode(train, params, mode)?;
    let values = match mode {
        PostprocessMode::FinalPattern => wiener_dft(&zero_mean(&raw)),
        // per-residual mode cleaned each residual already; still zero-mean
        // the aggregate so the pattern invariant holds
        PostprocessMode::PerResidual => zero_mean(&raw),
    };
    Ok(ReferencePattern {
        values,
        sensor_id: sensor_id.to_string(),
        train_count: train.len(),
        postprocessed: true,
    })
}

/// Normalized cross-correlation of two equally sized planes: both are mean
/// subtracted and L2-normalized as flat vectors, then multiplied. A
/// zero-norm side yields 0.
pub fn ncc_arrays(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected_h: a.dim().0,
            expected_w: a.dim().1,
            got_h: b.dim().0,
            got_w: b.dim().1,
        });
    }
    let n = a.len() as f64;
    let mean_a = a.sum() / n;
    let mean_b = b.sum() / n;
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let xa = x - mean_a;
        let yb = y - mean_b;
        dot += xa * yb;
        norm_a += xa * xa;
        norm_b += yb * yb;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// Correlation score between a test residual and a reference pattern.
pub fn ncc(residual: &NoiseResidual, pattern: &ReferencePattern) -> Result<NCCScore> {
    Ok(NCCScore {
        sensor_id: pattern.sensor_id.clone(),
        value: ncc_arrays(&residual.values, &pattern.values)?,
    })
}

/// Score a residual against every pattern in a gallery, in gallery order.
pub fn score_residual(residual: &NoiseResidual, gallery: &SensorGallery) -> Result<Vec<NCCScore>> {
    gallery.patterns().iter().map(|p| ncc(residual, p)).collect()
}

/// Predict the sensor of a residual: maximal score wins, ties break to the
/// earliest gallery entry.
pub fn classify_residual(
    residual: &NoiseResidual,
    gallery: &SensorGallery,
) -> Result<(String, Vec<NCCScore>)> {
    let scores = score_residual(residual, gallery)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.value > scores[best].value {
            best = i;
        }
    }
    Ok((scores[best].sensor_id.clone(), scores))
}

/// Predict the sensor that produced an image.
pub fn classify(
    img: &Image,
    gallery: &SensorGallery,
    params: &DenoiseParams,
) -> Result<(String, Vec<NCCScore>)> {
    let dims = gallery.dims();
    img.expect_dims(dims.0, dims.1)?;
    let res = residual(img, params)?;
    classify_residual(&res, gallery)
}

const PATTERN_MAGIC: &[u8; 5] = b"PRNU1";

/// Serialize a pattern: magic, LE u32 height/width/train_count, u8
/// postprocessed flag, u8 id length + UTF-8 id, then row-major LE f32
/// values.
pub fn save_pattern(pattern: &ReferencePattern, path: &Path) -> Result<()> {
    let bytes = encode_pattern(
        PATTERN_MAGIC,
        &pattern.values,
        pattern.train_count,
        pattern.postprocessed,
        &pattern.sensor_id,
    )?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_pattern(
    magic: &[u8; 5],
    values: &Array2<f64>,
    train_count: usize,
    postprocessed: bool,
    sensor_id: &str,
) -> Result<Vec<u8>> {
    let (h, w) = values.dim();
    let id = sensor_id.as_bytes();
    if id.len() > u8::MAX as usize {
        return Err(Error::InvalidParams(format!(
            "sensor id {sensor_id:?} longer than 255 bytes"
        )));
    }
    let mut out = Vec::with_capacity(16 + id.len() + h * w * 4);
    out.extend_from_slice(magic);
    out.write_all(&(h as u32).to_le_bytes()).unwrap();
    out.write_all(&(w as u32).to_le_bytes()).unwrap();
    out.write_all(&(train_count as u32).to_le_bytes()).unwrap();
    out.push(u8::from(postprocessed));
    out.push(id.len() as u8);
    out.extend_from_slice(id);
    for &v in values.iter() {
        out.write_all(&(v as f32).to_le_bytes()).unwrap();
    }
    Ok(out)
}

pub(crate) struct DecodedPattern {
    pub values: Array2<f64>,
    pub sensor_id: String,
    pub train_count: usize,
    pub postprocessed: bool,
}

pub(crate) fn decode_pattern(magic: &[u8; 5], path: &Path, data: &[u8]) -> Result<DecodedPattern> {
    let err = |reason: &str| Error::PatternFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if data.len() < 19 || &data[..5] != magic {
        return Err(err("bad magic"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(data[off..off + 4].try_into().unwrap()) as usize;
    let (h, w, train_count) = (u32_at(5), u32_at(9), u32_at(13));
    let postprocessed = data[17] != 0;
    let id_len = data[18] as usize;
    let id_end = 19 + id_len;
    let body_len = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| err("dimensions overflow"))?;
    if data.len() != id_end + body_len || h == 0 || w == 0 {
        return Err(err("length does not match header"));
    }
    let sensor_id = std::str::from_utf8(&data[19..id_end])
        .map_err(|_| err("sensor id is not UTF-8"))?
        .to_string();
    let mut values = Array2::zeros((h, w));
    for (i, v) in values.iter_mut().enumerate() {
        let off = id_end + i * 4;
        *v = f64::from(f32::from_le_bytes(data[off..off + 4].try_into().unwrap()));
    }
    Ok(DecodedPattern {
        values,
        sensor_id,
        train_count,
        postprocessed,
    })
}

/// Load a pattern written by [`save_pattern`].
pub fn load_pattern(path: &Path) -> Result<ReferencePattern> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = decode_pattern(PATTERN_MAGIC, path, &data)?;
    Ok(ReferencePattern {
        values: decoded.values,
        sensor_id: decoded.sensor_id,
        train_count: decoded.train_count,
        postprocessed: decoded.postprocessed,
    })
}
