//! Wavelet-domain denoising filter and noise-residual extraction.
//!
//! The residual `w = I - F(I)` is the carrier of the sensor pattern; `F`
//! decomposes the image with the Daubechies 8-tap bank, applies locally
//! adaptive Wiener shrinkage to every detail subband, and reconstructs.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::wavelet::{self, WaveletPyramid};

/// The wavelet family. Only the Daubechies 8-tap orthogonal filter is
/// supported; the identifier exists so configs state it explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WaveletKind {
    #[default]
    #[serde(rename = "db4")]
    Db4,
}

/// Parameters of the denoising filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseParams {
    pub wavelet: WaveletKind,
    /// Decomposition depth.
    pub levels: usize,
    /// Assumed noise variance in the wavelet domain.
    pub noise_variance: f64,
    /// Odd window sizes for the local-variance estimate; the smallest
    /// estimate across windows wins.
    pub window_sizes: Vec<usize>,
}

impl Default for DenoiseParams {
    fn default() -> Self {
        DenoiseParams {
            wavelet: WaveletKind::Db4,
            levels: 4,
            noise_variance: 9.0,
            window_sizes: vec![3, 5, 7, 9],
        }
    }
}

impl DenoiseParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidParams("levels must be at least 1".into()));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::InvalidParams(format!(
                "noise_variance {} must be positive",
                self.noise_variance
            )));
        }
        if self.window_sizes.is_empty() {
            return Err(Error::InvalidParams("window_sizes must be non-empty".into()));
        }
        for &w in &self.window_sizes {
            if w % 2 == 0 || w == 0 {
                return Err(Error::InvalidParams(format!(
                    "window size {w} must be odd and positive"
                )));
            }
        }
        Ok(())
    }
}

/// Per-pixel noise residual `w = I - F(I)`, same dimensions as its image.
#[derive(Debug, Clone)]
pub struct NoiseResidual {
    pub values: Array2<f64>,
}

impl NoiseResidual {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Forward decomposition of an image (see [`wavelet::forward`]).
pub fn dwt2(img: &Image, params: &DenoiseParams) -> Result<WaveletPyramid> {
    params.validate()?;
    wavelet::forward(img.pixels(), params.levels)
}

/// Reconstruction, cropped back to the source dimensions.
pub fn idwt2(pyramid: &WaveletPyramid) -> Array2<f64> {
    let (h, w) = pyramid.original_dims();
    let full = wavelet::inverse(pyramid);
    if full.dim() == (h, w) {
        full
    } else {
        full.slice(s![..h, ..w]).to_owned()
    }
}

/// Box mean with edge replication, computed separably with sliding sums.
/// Both passes stream row-major: horizontally `src -> tmp`, vertically
/// `tmp -> out` with a running per-column accumulator.
fn replicated_box_mean(src: &[f64], h: usize, w: usize, window: usize, tmp: &mut [f64], out: &mut [f64]) {
    let radius = window / 2;
    let clamp_w = |j: isize| -> usize { j.clamp(0, w as isize - 1) as usize };
    for i in 0..h {
        let row = &src[i * w..(i + 1) * w];
        let tmp_row = &mut tmp[i * w..(i + 1) * w];
        let mut acc = 0.0;
        for dj in -(radius as isize)..=radius as isize {
            acc += row[clamp_w(dj)];
        }
        tmp_row[0] = acc;
        for j in 1..w {
            let j = j as isize;
            acc += row[clamp_w(j + radius as isize)];
            acc -= row[clamp_w(j - 1 - radius as isize)];
            tmp_row[j as usize] = acc;
        }
    }
    let norm = 1.0 / (window * window) as f64;
    let clamp_h = |i: isize| -> usize { i.clamp(0, h as isize - 1) as usize };
    let row_at = |i: usize| -> std::ops::Range<usize> { i * w..(i + 1) * w };
    let mut acc = vec![0.0; w];
    for di in -(radius as isize)..=radius as isize {
        let r = &tmp[row_at(clamp_h(di))];
        for (a, &v) in acc.iter_mut().zip(r.iter()) {
            *a += v;
        }
    }
    for i in 0..h {
        let out_row = &mut out[i * w..(i + 1) * w];
        for (slot, &a) in out_row.iter_mut().zip(acc.iter()) {
            *slot = a * norm;
        }
        if i + 1 < h {
            let i = i as isize;
            let add_start = row_at(clamp_h(i + 1 + radius as isize)).start;
            let sub_start = row_at(clamp_h(i - radius as isize)).start;
            for (j, a) in acc.iter_mut().enumerate() {
                *a += tmp[add_start + j] - tmp[sub_start + j];
            }
        }
    }
}

/// Locally adaptive Wiener shrinkage of one detail subband: each
/// coefficient `c` becomes `c * s / (s + noise_variance)` where `s` is the
/// smallest clipped local second moment `max(0, mean(c^2) - noise_variance)`
/// across the configured window sizes.
pub fn wiener_subband(coeffs: &Array2<f64>, params: &DenoiseParams) -> Array2<f64> {
    let (h, w) = coeffs.dim();
    let n = h * w;
    let flat = coeffs.as_slice().expect("row-major subband");
    let squared: Vec<f64> = flat.iter().map(|c| c * c).collect();
    let mut tmp = vec![0.0; n];
    let mut mean = vec![0.0; n];
    let mut signal_var = vec![f64::INFINITY; n];
    for &window in &params.window_sizes {
        replicated_box_mean(&squared, h, w, window, &mut tmp, &mut mean);
        for (cur, &m) in signal_var.iter_mut().zip(mean.iter()) {
            let candidate = (m - params.noise_variance).max(0.0);
            if candidate < *cur {
                *cur = candidate;
            }
        }
    }
    let out: Vec<f64> = flat
        .iter()
        .zip(signal_var.iter())
        .map(|(&c, &s)| c * s / (s + params.noise_variance))
        .collect();
    Array2::from_shape_vec((h, w), out).expect("shape preserved")
}

/// The denoising filter `F`: shrink every detail subband, keep the
/// approximation, reconstruct. The output is real-valued and intentionally
/// not clamped; callers subtract it from the source image.
pub fn denoise(img: &Image, params: &DenoiseParams) -> Result<Array2<f64>> {
    let mut pyramid = dwt2(img, params)?;
    for band in &mut pyramid.levels {
        band.lh = wiener_subband(&band.lh, params);
        band.hl = wiener_subband(&band.hl, params);
        band.hh = wiener_subband(&band.hh, params);
    }
    Ok(idwt2(&pyramid))
}

/// Noise residual `w = I - F(I)`.
pub fn residual(img: &Image, params: &DenoiseParams) -> Result<NoiseResidual> {
    let filtered = denoise(img, params)?;
    Ok(NoiseResidual {
        values: img.pixels() - &filtered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = stream_rng(seed, "denoise-test", 0);
        Image::clamped(Array2::from_shape_fn((h, w), |_| rng.gen_range(0.0..255.0)))
    }

    #[test]
    fn zero_subband_maps_to_zero() {
        let band = Array2::zeros((6, 9));
        let out = wiener_subband(&band, &DenoiseParams::default());
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_coefficients_shrink_to_zero() {
        // local mean of c^2 stays below the noise variance, so the signal
        // variance estimate is 0 everywhere
        let band = Array2::from_elem((8, 8), 0.5);
        let out = wiener_subband(&band, &DenoiseParams::default());
        assert!(out.iter().all(|&v| v == 0.0));
    }

    // Straight-line re-statement of the shrinkage formula, quadratic in the
    // window size; kept independent of the separable implementation.
    fn wiener_reference(coeffs: &Array2<f64>, params: &DenoiseParams) -> Array2<f64> {
        let (h, w) = coeffs.dim();
        Array2::from_shape_fn((h, w), |(i, j)| {
            let mut best = f64::INFINITY;
            for &win in &params.window_sizes {
                let r = (win / 2) as isize;
                let mut acc = 0.0;
                for di in -r..=r {
                    for dj in -r..=r {
                        let si = (i as isize + di).clamp(0, h as isize - 1) as usize;
                        let sj = (j as isize + dj).clamp(0, w as isize - 1) as usize;
                        acc += coeffs[[si, sj]].powi(2);
                    }
                }
                let est = (acc / (win * win) as f64 - params.noise_variance).max(0.0);
                best = best.min(est);
            }
            coeffs[[i, j]] * best / (best + params.noise_variance)
        })
    }

    #[test]
    fn shrinkage_matches_scalar_reference() {
        let mut rng = stream_rng(11, "wiener-oracle", 0);
        let band = Array2::from_shape_fn((5, 5), |_| rng.gen_range(-12.0..12.0));
        let expected = wiener_reference(&band, &DenoiseParams::default());
        let got = wiener_subband(&band, &DenoiseParams::default());
        for (e, g) in expected.iter().zip(got.iter()) {
            assert!((e - g).abs() < 1e-12, "expected {e}, got {g}");
        }
    }

    #[test]
    fn shrinkage_matches_reference_on_wide_band() {
        // window larger than one band dimension exercises the clamped slides
        let mut rng = stream_rng(12, "wiener-oracle", 1);
        let band = Array2::from_shape_fn((4, 19), |_| rng.gen_range(-9.0..9.0));
        let expected = wiener_reference(&band, &DenoiseParams::default());
        let got = wiener_subband(&band, &DenoiseParams::default());
        for (e, g) in expected.iter().zip(got.iter()) {
            assert!((e - g).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_image_denoises_to_itself() {
        for c in [0.0, 77.25, 255.0] {
            let img = Image::constant(24, 40, c);
            let out = denoise(&img, &DenoiseParams::default()).unwrap();
            let max = out.iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
            assert!(max < 1e-6, "constant {c}: max deviation {max}");
        }
    }

    #[test]
    fn residual_of_constant_is_zero() {
        let img = Image::constant(32, 32, 130.0);
        let res = residual(&img, &DenoiseParams::default()).unwrap();
        let max = res.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(max < 1e-6);
    }

    #[test]
    fn residual_plus_denoised_recovers_image_exactly() {
        let img = random_image(40, 56, 3);
        let params = DenoiseParams::default();
        let filtered = denoise(&img, &params).unwrap();
        let res = residual(&img, &params).unwrap();
        let sum = &res.values + &filtered;
        assert_eq!(sum, *img.pixels());
    }

    /// Smooth random scene plus moderate Gaussian noise: the regime the
    /// shrinkage estimator is tuned for.
    fn noisy_scene(h: usize, w: usize, seed: u64) -> Image {
        use rand_distr::{Distribution, Normal};
        let mut rng = stream_rng(seed, "noisy-scene", 0);
        let coarse = Array2::from_shape_fn((h / 8 + 2, w / 8 + 2), |_| rng.gen_range(60.0..200.0));
        let normal = Normal::new(0.0, 4.0).unwrap();
        Image::clamped(Array2::from_shape_fn((h, w), |(i, j)| {
            let (y, x) = (i as f64 / 8.0, j as f64 / 8.0);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            let base = coarse[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
                + coarse[[y0, x0 + 1]] * (1.0 - fy) * fx
                + coarse[[y0 + 1, x0]] * fy * (1.0 - fx)
                + coarse[[y0 + 1, x0 + 1]] * fy * fx;
            base + normal.sample(&mut rng)
        }))
    }

    #[test]
    fn denoising_twice_removes_less_than_once() {
        // second-pass residual energy never exceeds the first-pass energy;
        // the frozen bound pins the behaviour as a regression fixture
        let mut ratios = Vec::new();
        for seed in 0..10u64 {
            let img = noisy_scene(48, 48, 100 + seed);
            let params = DenoiseParams::default();
            let once = denoise(&img, &params).unwrap();
            let twice = denoise(&Image::clamped(once.clone()), &params).unwrap();
            let e1: f64 = (img.pixels() - &once).iter().map(|v| v * v).sum();
            let e2: f64 = (&once - &twice).iter().map(|v| v * v).sum();
            assert!(e2 <= e1, "seed {seed}: second pass grew {e2} > {e1}");
            ratios.push(e2 / e1);
        }
        // observed ratios sit in 0.48..0.70 for this fixture family
        assert!(ratios.iter().all(|&r| r < 0.75), "ratios {ratios:?}");
    }

    #[test]
    fn denoise_is_deterministic() {
        let img = random_image(33, 47, 9);
        let a = denoise(&img, &DenoiseParams::default()).unwrap();
        let b = denoise(&img, &DenoiseParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn residuals_are_finite_for_eight_bit_inputs() {
        let img = random_image(64, 48, 21);
        let res = residual(&img, &DenoiseParams::default()).unwrap();
        assert!(res.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn params_validation_rejects_bad_values() {
        let mut p = DenoiseParams::default();
        p.levels = 0;
        assert!(p.validate().is_err());
        let mut p = DenoiseParams::default();
        p.noise_variance = 0.0;
        assert!(p.validate().is_err());
        let mut p = DenoiseParams::default();
        p.window_sizes = vec![4];
        assert!(p.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        // Shrinkage never increases a coefficient's magnitude.
        #[test]
        fn wiener_is_contractive(seed in 0u64..500, h in 2usize..10, w in 2usize..10) {
            let mut rng = stream_rng(seed, "wiener-contract", 0);
            let band = Array2::from_shape_fn((h, w), |_| rng.gen_range(-50.0..50.0));
            let out = wiener_subband(&band, &DenoiseParams::default());
            for (o, i) in out.iter().zip(band.iter()) {
                prop_assert!(o.abs() <= i.abs() + 1e-12);
            }
        }
    }
}
