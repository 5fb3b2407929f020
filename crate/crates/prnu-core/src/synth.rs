//! Synthetic sensor simulator.
//!
//! Generates per-sensor multiplicative response fields and "captures" of
//! synthetic scenes, giving every experiment a license-free ground truth:
//! the injected field is known exactly, so estimation quality and spoofing
//! outcomes can be asserted rather than eyeballed.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fingerprint::{decode_pattern, encode_pattern};
use crate::image::Image;
use crate::seeds::stream_rng;

/// A simulated sensor: a fixed multiplicative per-pixel response field plus
/// additive read noise. Capture output is `clamp(scene * (1 + k) + noise)`
/// quantized to 8-bit levels, the same dynamic-range path file-loaded
/// images take.
#[derive(Debug, Clone)]
pub struct SyntheticSensor {
    pub sensor_id: String,
    /// Ground-truth response field, i.i.d. Gaussian scaled by `strength`.
    pub prnu_field: Array2<f64>,
    pub strength: f64,
    pub read_noise_sigma: f64,
    pub rng_seed: u64,
}

impl SyntheticSensor {
    /// Draw a sensor's response field from its seed.
    pub fn new(
        sensor_id: &str,
        height: usize,
        width: usize,
        strength: f64,
        read_noise_sigma: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        if !(strength > 0.0) {
            return Err(Error::InvalidParams(format!(
                "PRNU strength {strength} must be positive"
            )));
        }
        if read_noise_sigma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "read noise sigma {read_noise_sigma} must be non-negative"
            )));
        }
        let mut rng = stream_rng(rng_seed, "prnu-field", 0);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let prnu_field =
            Array2::from_shape_fn((height, width), |_| strength * normal.sample(&mut rng));
        Ok(SyntheticSensor {
            sensor_id: sensor_id.to_string(),
            prnu_field,
            strength,
            read_noise_sigma,
            rng_seed,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.prnu_field.dim()
    }

    /// Acquire one image of `scene`. Deterministic in
    /// `(sensor seed, shot_seed)`.
    pub fn capture(&self, scene: &Image, shot_seed: u64) -> Result<Image> {
        let (h, w) = self.dims();
        scene.expect_dims(h, w)?;
        let mut rng = stream_rng(self.rng_seed, "capture", shot_seed);
        let mut out = Array2::zeros((h, w));
        if self.read_noise_sigma > 0.0 {
            let noise = Normal::new(0.0, self.read_noise_sigma).expect("validated sigma");
            for ((o, &s), &k) in out
                .iter_mut()
                .zip(scene.pixels().iter())
                .zip(self.prnu_field.iter())
            {
                *o = (s * (1.0 + k) + noise.sample(&mut rng)).round().clamp(0.0, 255.0);
            }
        } else {
            for ((o, &s), &k) in out
                .iter_mut()
                .zip(scene.pixels().iter())
                .zip(self.prnu_field.iter())
            {
                *o = (s * (1.0 + k)).round().clamp(0.0, 255.0);
            }
        }
        Ok(Image::clamped(out))
    }
}

/// Deterministic bank of textured synthetic scenes: a smooth random field,
/// concentric ring texture, a dark off-center "pupil" disk, and a small
/// specular highlight. Mean intensity lands mid-range.
pub fn make_scene_bank(count: usize, dims: (usize, usize), rng_seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| make_scene(dims, rng_seed, i as u64))
        .collect()
}

fn make_scene(dims: (usize, usize), rng_seed: u64, index: u64) -> Image {
    let (h, w) = dims;
    let mut rng = stream_rng(rng_seed, "scene", index);

    // smooth background: bilinear upsampling of a coarse random grid
    let cell = 8usize;
    let coarse = Array2::from_shape_fn((h / cell + 2, w / cell + 2), |_| {
        rng.gen_range(-30.0..30.0)
    });
    // a second coarse grid gates where fine texture appears (skin and
    // lash regions are rough, sclera and defocused areas are smooth);
    // the steep ramp makes the gate nearly binary with soft borders
    let texture_gate = Array2::from_shape_fn((h / cell + 2, w / cell + 2), |_| {
        let u = rng.gen_range(0.0f64..1.0);
        ((0.55 - u) * 8.0).clamp(0.0, 1.0)
    });
    let base_level = rng.gen_range(110.0..150.0);

    let cy = h as f64 * rng.gen_range(0.4..0.6);
    let cx = w as f64 * rng.gen_range(0.4..0.6);
    let pupil_radius = (h.min(w) as f64) * rng.gen_range(0.10..0.16);
    let iris_radius = pupil_radius * rng.gen_range(2.2..2.8);
    let ring_freq = rng.gen_range(0.5..0.9);
    let ring_phase = rng.gen_range(0.0..std::f64::consts::TAU);

    // a small corneal-style glint
    let glint_y = cy + rng.gen_range(-8.0..8.0);
    let glint_x = cx + rng.gen_range(-8.0..8.0);
    let glint_r = rng.gen_range(2.0..4.0);

    // fine-grained detail: mostly per-pixel roughness with a little spatial
    // correlation mixed in so the energy spans the two finest scales
    let grain_amp = rng.gen_range(24.0..36.0);
    let white = Array2::from_shape_fn((h, w), |_| rng.gen_range(-1.0f64..1.0));
    let mut grain = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let si = (i as i64 + di).clamp(0, h as i64 - 1) as usize;
                    let sj = (j as i64 + dj).clamp(0, w as i64 - 1) as usize;
                    acc += white[[si, sj]];
                }
            }
            grain[[i, j]] = 0.6 * white[[i, j]] + 0.4 * (acc / 3.0);
        }
    }

    let mut out = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let (y, x) = (i as f64 / cell as f64, j as f64 / cell as f64);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            let lerp = |grid: &Array2<f64>| {
                grid[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
                    + grid[[y0, x0 + 1]] * (1.0 - fy) * fx
                    + grid[[y0 + 1, x0]] * fy * (1.0 - fx)
                    + grid[[y0 + 1, x0 + 1]] * fy * fx
            };
            let smooth = lerp(&coarse);
            let gate = lerp(&texture_gate).clamp(0.0, 1.0);

            let r = ((i as f64 - cy).powi(2) + (j as f64 - cx).powi(2)).sqrt();
            // concentric texture inside the iris annulus, fading outward
            let ring_amp = if r < iris_radius {
                14.0 * (1.0 - r / iris_radius)
            } else {
                0.0
            };
            let rings = ring_amp * (r * ring_freq + ring_phase).sin();
            // smooth-walled dark pupil
            let pupil = -95.0 / (1.0 + ((r - pupil_radius) / 1.5).exp());
            let gd = ((i as f64 - glint_y).powi(2) + (j as f64 - glint_x).powi(2)).sqrt();
            let glint = 130.0 / (1.0 + ((gd - glint_r) / 0.8).exp());

            out[[i, j]] =
                base_level + smooth + rings + pupil + glint + grain_amp * gate * grain[[i, j]];
        }
    }
    Image::clamped(out)
}

const FIELD_MAGIC: &[u8; 5] = b"SYNK1";

/// Persist the ground-truth field (same record layout as `.prnu` files,
/// distinct magic). Oracle use only; never fed to the classifier.
pub fn save_field(sensor: &SyntheticSensor, path: &Path) -> Result<()> {
    let bytes = encode_pattern(FIELD_MAGIC, &sensor.prnu_field, 1, false, &sensor.sensor_id)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load a ground-truth field written by [`save_field`].
pub fn load_field(path: &Path) -> Result<(String, Array2<f64>)> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = decode_pattern(FIELD_MAGIC, path, &data)?;
    Ok((decoded.sensor_id, decoded.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::ncc_arrays;

    #[test]
    fn degenerate_sensor_reproduces_the_scene() {
        // vanishing strength and no read noise: capture is quantization only
        let sensor = SyntheticSensor::new("id", 12, 12, 1e-12, 0.0, 1).unwrap();
        let scene = Image::constant(12, 12, 173.0);
        let shot = sensor.capture(&scene, 0).unwrap();
        assert_eq!(shot.pixels(), scene.pixels());
    }

    #[test]
    fn all_zero_scene_stays_zero() {
        let sensor = SyntheticSensor::new("id", 10, 10, 0.05, 0.0, 2).unwrap();
        let scene = Image::constant(10, 10, 0.0);
        let shot = sensor.capture(&scene, 3).unwrap();
        assert!(shot.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn capture_is_seed_deterministic() {
        let sensor = SyntheticSensor::new("id", 16, 16, 0.02, 2.0, 3).unwrap();
        let scene = make_scene_bank(1, (16, 16), 9).pop().unwrap();
        let a = sensor.capture(&scene, 7).unwrap();
        let b = sensor.capture(&scene, 7).unwrap();
        assert_eq!(a.pixels(), b.pixels());
        let c = sensor.capture(&scene, 8).unwrap();
        assert_ne!(a.pixels(), c.pixels());
    }

    #[test]
    fn capture_rejects_mismatched_scene() {
        let sensor = SyntheticSensor::new("id", 16, 16, 0.02, 2.0, 3).unwrap();
        let scene = Image::constant(8, 16, 100.0);
        assert!(sensor.capture(&scene, 0).is_err());
    }

    #[test]
    fn scene_bank_is_deterministic_and_mid_range() {
        let a = make_scene_bank(3, (120, 160), 42);
        let b = make_scene_bank(3, (120, 160), 42);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.pixels(), y.pixels());
        }
        let c = make_scene_bank(3, (120, 160), 43);
        assert!(a.iter().zip(c.iter()).any(|(x, y)| x.pixels() != y.pixels()));
        for img in &a {
            let mean = img.pixels().sum() / img.pixels().len() as f64;
            assert!((80.0..180.0).contains(&mean), "mean {mean}");
        }
    }

    #[test]
    fn independent_fields_are_nearly_orthogonal() {
        let a = SyntheticSensor::new("a", 120, 160, 0.02, 2.0, 100).unwrap();
        let b = SyntheticSensor::new("b", 120, 160, 0.02, 2.0, 101).unwrap();
        let corr = ncc_arrays(&a.prnu_field, &b.prnu_field).unwrap();
        assert!(corr.abs() < 0.05, "fields correlate at {corr}");
    }

    #[test]
    fn field_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cam.synk");
        let sensor = SyntheticSensor::new("cam-a", 6, 8, 0.02, 2.0, 5).unwrap();
        save_field(&sensor, &path).unwrap();
        let (id, field) = load_field(&path).unwrap();
        assert_eq!(id, "cam-a");
        // values pass through f32 storage
        for (orig, got) in sensor.prnu_field.iter().zip(field.iter()) {
            assert!((orig - got).abs() < 1e-7);
        }
    }

    #[test]
    fn prnu_file_is_not_a_field_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cam.synk");
        let sensor = SyntheticSensor::new("cam-a", 4, 4, 0.02, 2.0, 5).unwrap();
        save_field(&sensor, &path).unwrap();
        assert!(crate::fingerprint::load_pattern(&path).is_err());
    }
}
