//! Separable 2D discrete wavelet transform with the Daubechies 8-tap
//! orthogonal filter bank.
//!
//! Each level uses periodized convolution, so the transform is exactly
//! orthonormal and reconstruction is exact to machine precision. Images
//! whose dimensions are not divisible by `2^levels` are first extended
//! by mirror padding on the bottom/right up to the next multiple, and the
//! reconstruction is cropped back by the caller.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Daubechies 8-tap scaling (low-pass) filter, sum = sqrt(2).
pub const DB4_SCALING: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_849,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

const TAPS: usize = 8;

/// Quadrature mirror of the scaling filter: g[m] = (-1)^m h[N-1-m].
fn wavelet_filter() -> [f64; 8] {
    let mut g = [0.0; 8];
    for (m, slot) in g.iter_mut().enumerate() {
        let h = DB4_SCALING[TAPS - 1 - m];
        *slot = if m % 2 == 0 { h } else { -h };
    }
    g
}

/// Detail subbands of one decomposition level. The first letter names the
/// filter applied along columns, the second along rows: `lh` is column
/// low-pass / row high-pass, `hl` the converse, `hh` high-pass in both.
#[derive(Debug, Clone)]
pub struct DetailBands {
    pub lh: Array2<f64>,
    pub hl: Array2<f64>,
    pub hh: Array2<f64>,
}

/// Multi-level decomposition: per-level detail bands (index 0 is the finest
/// scale) plus the final low-pass approximation.
#[derive(Debug, Clone)]
pub struct WaveletPyramid {
    pub levels: Vec<DetailBands>,
    pub approx: Array2<f64>,
    original_dims: (usize, usize),
    padded_dims: (usize, usize),
}

impl WaveletPyramid {
    pub fn original_dims(&self) -> (usize, usize) {
        self.original_dims
    }

    pub fn padded_dims(&self) -> (usize, usize) {
        self.padded_dims
    }

    /// Sum of squares over every coefficient. Equals the energy of the
    /// (padded) input plane because the transform is orthonormal.
    pub fn coefficient_energy(&self) -> f64 {
        let detail: f64 = self
            .levels
            .iter()
            .flat_map(|b| [&b.lh, &b.hl, &b.hh])
            .map(|band| band.iter().map(|v| v * v).sum::<f64>())
            .sum();
        detail + self.approx.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Mirror-extend `input` on the bottom/right so both dimensions become
/// multiples of `multiple` (half-sample symmetry: the edge pixel repeats).
pub fn pad_symmetric(input: &Array2<f64>, multiple: usize) -> Result<Array2<f64>> {
    let (h, w) = input.dim();
    let ph = h.div_ceil(multiple) * multiple;
    let pw = w.div_ceil(multiple) * multiple;
    if ph - h > h || pw - w > w {
        // the mirror would have to fold more than once
        return Err(Error::ImageTooSmall {
            h,
            w,
            levels: multiple.trailing_zeros() as usize,
        });
    }
    if (ph, pw) == (h, w) {
        return Ok(input.clone());
    }
    let mut out = Array2::zeros((ph, pw));
    for i in 0..ph {
        let si = if i < h { i } else { 2 * h - 1 - i };
        for j in 0..pw {
            let sj = if j < w { j } else { 2 * w - 1 - j };
            out[[i, j]] = input[[si, sj]];
        }
    }
    Ok(out)
}

fn validate_levels(levels: usize) -> Result<usize> {
    if levels == 0 || levels > 16 {
        return Err(Error::InvalidParams(format!(
            "decomposition depth {levels} out of range 1..=16"
        )));
    }
    Ok(1usize << levels)
}

/// One periodized analysis pass: `signal` (even length) splits into
/// low-pass and high-pass halves. Outputs whose support stays inside the
/// signal take the branch-free path; only the tail wraps.
fn analyze(signal: &[f64], lo: &mut [f64], hi: &mut [f64], g: &[f64; 8]) {
    let n = signal.len();
    let half = n / 2;
    let no_wrap = if n >= TAPS { (n - TAPS) / 2 + 1 } else { 0 };
    for k in 0..no_wrap {
        let x = &signal[2 * k..2 * k + TAPS];
        let mut a = 0.0;
        let mut d = 0.0;
        for m in 0..TAPS {
            a += DB4_SCALING[m] * x[m];
            d += g[m] * x[m];
        }
        lo[k] = a;
        hi[k] = d;
    }
    for k in no_wrap..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for m in 0..TAPS {
            let mut idx = 2 * k + m;
            while idx >= n {
                idx -= n;
            }
            let x = signal[idx];
            a += DB4_SCALING[m] * x;
            d += g[m] * x;
        }
        lo[k] = a;
        hi[k] = d;
    }
}

/// Transpose of [`analyze`] in gather form: output `i` draws the four taps
/// of matching parity from each coefficient half. Exact inverse for
/// orthonormal filters.
fn synthesize(lo: &[f64], hi: &[f64], out: &mut [f64], g: &[f64; 8]) {
    let n = out.len();
    let half = n / 2;
    let wrap_end = (TAPS - 2).min(n);
    for (i, slot) in out.iter_mut().enumerate().take(wrap_end) {
        let parity = i & 1;
        let base = i / 2;
        let mut acc = 0.0;
        for j in 0..TAPS / 2 {
            let m = 2 * j + parity;
            let k = (base + 4 * half - j) % half;
            acc += DB4_SCALING[m] * lo[k] + g[m] * hi[k];
        }
        *slot = acc;
    }
    for (i, slot) in out.iter_mut().enumerate().skip(wrap_end) {
        let parity = i & 1;
        let base = i / 2;
        let mut acc = 0.0;
        for j in 0..TAPS / 2 {
            let m = 2 * j + parity;
            let k = base - j;
            acc += DB4_SCALING[m] * lo[k] + g[m] * hi[k];
        }
        *slot = acc;
    }
}

/// Forward multi-level transform of an arbitrary real plane.
pub fn forward(input: &Array2<f64>, levels: usize) -> Result<WaveletPyramid> {
    let multiple = validate_levels(levels)?;
    let original_dims = input.dim();
    let padded = pad_symmetric(input, multiple)?;
    let padded_dims = padded.dim();
    let g = wavelet_filter();

    // flat row-major working plane; each level shrinks it by half per axis
    let mut plane = padded.into_raw_vec();
    let mut bands = Vec::with_capacity(levels);
    let longest = padded_dims.0.max(padded_dims.1);
    let mut scratch = vec![0.0; longest];
    let mut lo_buf = vec![0.0; longest / 2];
    let mut hi_buf = vec![0.0; longest / 2];

    let (mut ch, mut cw) = padded_dims;
    let stride = padded_dims.1;
    for _ in 0..levels {
        let (hh2, hw2) = (ch / 2, cw / 2);
        // rows in place: [low | high]
        for r in 0..ch {
            let row = &mut plane[r * stride..r * stride + cw];
            scratch[..cw].copy_from_slice(row);
            analyze(&scratch[..cw], &mut lo_buf[..hw2], &mut hi_buf[..hw2], &g);
            row[..hw2].copy_from_slice(&lo_buf[..hw2]);
            row[hw2..cw].copy_from_slice(&hi_buf[..hw2]);
        }
        // columns in place: [low; high]
        for c in 0..cw {
            for r in 0..ch {
                scratch[r] = plane[r * stride + c];
            }
            analyze(&scratch[..ch], &mut lo_buf[..hh2], &mut hi_buf[..hh2], &g);
            for r in 0..hh2 {
                plane[r * stride + c] = lo_buf[r];
                plane[(r + hh2) * stride + c] = hi_buf[r];
            }
        }

        let quadrant = |r0: usize, c0: usize| {
            Array2::from_shape_fn((hh2, hw2), |(r, c)| plane[(r0 + r) * stride + c0 + c])
        };
        bands.push(DetailBands {
            lh: quadrant(0, hw2),
            hl: quadrant(hh2, 0),
            hh: quadrant(hh2, hw2),
        });
        (ch, cw) = (hh2, hw2);
    }

    let approx = Array2::from_shape_fn((ch, cw), |(r, c)| plane[r * stride + c]);
    Ok(WaveletPyramid {
        levels: bands,
        approx,
        original_dims,
        padded_dims,
    })
}

/// Inverse transform back to the padded plane. Callers crop to
/// [`WaveletPyramid::original_dims`] when padding was added.
pub fn inverse(pyramid: &WaveletPyramid) -> Array2<f64> {
    let g = wavelet_filter();
    let (ph, pw) = pyramid.padded_dims;
    let stride = pw;
    let longest = ph.max(pw);
    let mut scratch = vec![0.0; longest];
    let mut lo_buf = vec![0.0; longest / 2];
    let mut hi_buf = vec![0.0; longest / 2];
    let mut plane = vec![0.0; ph * pw];

    // seed the coarsest quadrant
    let (mut hh2, mut hw2) = pyramid.approx.dim();
    for (r, row) in pyramid.approx.rows().into_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            plane[r * stride + c] = v;
        }
    }

    for band in pyramid.levels.iter().rev() {
        let (ch, cw) = (hh2 * 2, hw2 * 2);
        for r in 0..hh2 {
            for c in 0..hw2 {
                plane[r * stride + hw2 + c] = band.lh[[r, c]];
                plane[(r + hh2) * stride + c] = band.hl[[r, c]];
                plane[(r + hh2) * stride + hw2 + c] = band.hh[[r, c]];
            }
        }
        // undo columns, then rows
        for c in 0..cw {
            for r in 0..hh2 {
                lo_buf[r] = plane[r * stride + c];
                hi_buf[r] = plane[(r + hh2) * stride + c];
            }
            synthesize(&lo_buf[..hh2], &hi_buf[..hh2], &mut scratch[..ch], &g);
            for r in 0..ch {
                plane[r * stride + c] = scratch[r];
            }
        }
        for r in 0..ch {
            let row = &mut plane[r * stride..r * stride + cw];
            lo_buf[..hw2].copy_from_slice(&row[..hw2]);
            hi_buf[..hw2].copy_from_slice(&row[hw2..cw]);
            synthesize(&lo_buf[..hw2], &hi_buf[..hw2], &mut scratch[..cw], &g);
            row.copy_from_slice(&scratch[..cw]);
        }
        (hh2, hw2) = (ch, cw);
    }
    Array2::from_shape_vec((ph, pw), plane).expect("plane matches padded dims")
}
